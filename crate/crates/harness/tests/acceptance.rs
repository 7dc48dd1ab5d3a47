//! Acceptance criteria. Each prints one `[PASS]` / `[FAIL]` line; the binary
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconf::report::{emit_report, replay};
use reconf::{compare_logits_oracle, run_evaluation, sweep_draws, RunConfig, ToyWorld};
use reconf_client::{CompletionBackend, Fixture, MockBackend};
use reconf_core::metrics::{auroc, brier, ece, tace};
use reconf_core::rephrase::{
    assemble_rephrased_question, build_answer_prompt, build_rephrase_prompt, TemplateSet, HINT_PREFACES,
};
use reconf_core::stats::{logistic_fit_check, sample_logistic, temper_forward};
use reconf_core::verify::{verify_prop1, verify_prop2};
use reconf_core::{
    ChoiceLabel, DecodeConfig, LatentToyModel64, LogisticParams64, Question, ScoredItem64, Strategy, StrategyKind,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn label(i: usize) -> ChoiceLabel {
    ChoiceLabel::from_index(i).unwrap()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn criterion_01_naive_baseline_identities() -> Outcome {
    let world = ToyWorld::generate(500, 4.0, 1.0, 0.0, 11);
    let backend = world.backend();
    let cfg = RunConfig::new(Strategy::identity(), DecodeConfig::Top1, 1, 5);
    let run = run_evaluation(&cfg, &world.dataset(), &TemplateSet::default(), &backend, &backend).unwrap();
    let r = &run.evaluation.report;
    let all_parsed = run.records.iter().all(|x| x.extracted.label().is_some());
    let ece_ok = (r.ece - (1.0 - r.accuracy)).abs() <= 1e-12;
    let brier_ok = (r.brier - 2.0 * (1.0 - r.accuracy)).abs() <= 1e-12;
    let auroc_ok = r.auroc.is_none_or(|a| a == 0.5);

    // 742 of 1000 correct, each at confidence 1
    let items: Vec<ScoredItem64> = (0..1000)
        .map(|i| ScoredItem64::one_hot(label(0), label(if i < 742 { 0 } else { 1 }), 4))
        .collect();
    let table_ece = ece(&items, 10).unwrap();
    let table_brier = brier(&items).unwrap();
    let table_ok =
        (table_ece - 0.258).abs() <= 1e-12 && (table_brier - 0.516).abs() <= 1e-12 && auroc(&items) == Some(0.5);

    verdict(
        all_parsed && ece_ok && brier_ok && auroc_ok && table_ok,
        format!(
            "acc {:.4} ece {:.4} brier {:.4} auroc {:?}; acc 0.742 -> ece {table_ece:.3} brier {table_brier:.3}",
            r.accuracy, r.ece, r.brier, r.auroc
        ),
    )
}

/// Twice the number of (correct, incorrect) pairs ordered correctly, ties as one.
fn pairwise_auroc(items: &[ScoredItem64]) -> Option<f64> {
    let pos: Vec<f64> = items.iter().filter(|i| i.correct).map(|i| i.confidence).collect();
    let neg: Vec<f64> = items.iter().filter(|i| !i.correct).map(|i| i.confidence).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice: u64 = 0;
    for &p in &pos {
        for &n in &neg {
            twice += match p.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    Some(twice as f64 / (2 * pos.len() * neg.len()) as f64)
}

fn criterion_02_auroc_matches_pairwise_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let trials = 200;
    for _ in 0..trials {
        // coarse grid so ties are common
        let items: Vec<ScoredItem64> = (0..100)
            .map(|_| {
                let confidence = rng.gen_range(0..=10) as f64 / 10.0;
                let correct = rng.gen_bool(0.3 + 0.4 * confidence);
                ScoredItem64 {
                    confidence,
                    correct,
                    distribution: vec![confidence, 1.0 - confidence],
                    gold: label(usize::from(!correct)),
                }
            })
            .collect();
        if auroc(&items) != pairwise_auroc(&items) {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{mismatches} mismatches over {trials} sets of 100 items"),
    )
}

fn criterion_03_consistency_recovers_softmax() -> Outcome {
    let model = LatentToyModel64::with_gap(3f64.ln(), 1.0, 0.0);
    let r = verify_prop1(&model, 100_000, 3).unwrap();
    let recovery_ok = (r.mc_pa - 0.75).abs() < 0.01;

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let seeds = 200;
    let identified = (0..seeds)
        .filter(|&seed| {
            let magnitude = rng.gen_range(0.2f64..3.0).max(0.2 + 1e-9);
            let gap = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            let m = LatentToyModel64::with_gap(gap, 1.0, 0.0);
            verify_prop1(&m, 10_000, 1_000 + seed).unwrap().argmax_agrees
        })
        .count();
    let id_ok = identified as f64 >= 0.99 * seeds as f64;
    verdict(
        recovery_ok && id_ok,
        format!(
            "p_A {:.4} vs 0.75; argmax identified in {identified}/{seeds} seeds",
            r.mc_pa
        ),
    )
}

fn criterion_04_tempering_grid() -> Outcome {
    let mut worst_lin: f64 = 0.0;
    let mut worst_mc: f64 = 0.0;
    let mut example = (0.0, 0.0);
    for (i, &p) in [0.3, 0.4, 0.5, 0.6, 0.7].iter().enumerate() {
        for (j, &scale) in [1.0f64, 1.5, 2.0].iter().enumerate() {
            let part = scale / 2f64.sqrt();
            let model = LatentToyModel64::with_gap(logit(p), part, part);
            let r = verify_prop2(&model, 100_000, (10 * i + j) as u64).unwrap();
            // independent evaluations of the exact and linearized values
            let exact = logistic(logit(p) / scale);
            let linear = 0.5 + (p - 0.5) / scale;
            assert!((r.exact_pa - exact).abs() < 1e-12);
            assert!((r.linearized_pa - linear).abs() < 1e-12);
            assert!((temper_forward(p, part, part).unwrap() - linear).abs() < 1e-12);
            worst_lin = worst_lin.max((exact - linear).abs());
            worst_mc = worst_mc.max((r.mc_pa - exact).abs());
            if p == 0.6 && scale == 2.0 {
                example = (exact, linear);
            }
        }
    }
    let example_ok = (example.0 - 0.5505).abs() < 5e-5 && (example.1 - 0.55).abs() < 1e-12;
    verdict(
        worst_lin <= 0.05 && worst_mc <= 0.01 && example_ok,
        format!(
            "max |exact - linearized| {worst_lin:.5}, max |MC - exact| {worst_mc:.5}, p 0.6 scale 2: {:.4} vs {:.2}",
            example.0, example.1
        ),
    )
}

fn criterion_05_calibrated_predictor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let items: Vec<ScoredItem64> = (0..100_000)
        .map(|_| {
            let confidence: f64 = rng.gen_range(0.25..1.0);
            let correct = rng.gen_bool(confidence);
            let rest = (1.0 - confidence) / 3.0;
            let predicted = 0;
            let gold = if correct { predicted } else { rng.gen_range(1..4) };
            let mut distribution = vec![rest; 4];
            distribution[predicted] = confidence;
            ScoredItem64 {
                confidence,
                correct,
                distribution,
                gold: label(gold),
            }
        })
        .collect();
    let e = ece(&items, 10).unwrap();
    let t = tace(&items, 10, 0.01).unwrap();
    verdict(
        e < 0.02 && t < 0.03,
        format!("ECE {e:.4} (< 0.02), TACE {t:.4} (< 0.03)"),
    )
}

fn criterion_06_ks_validity_and_power() -> Outcome {
    let n = 100;
    let seeds = 500u64;
    let run = |shift: f64, offset: u64| {
        (0..seeds)
            .filter(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(offset + s);
                let params = LogisticParams64::new(shift, 1.0).unwrap();
                let xs: Vec<f64> = (0..n).map(|_| sample_logistic(&mut rng, params)).collect();
                let fit = logistic_fit_check(&xs).unwrap();
                assert!((fit.critical - 0.136).abs() < 1e-12);
                fit.pass
            })
            .count()
    };
    let passes = run(0.0, 0);
    let shifted_passes = run(1.5, 10_000);
    let fails = seeds as usize - shifted_passes;
    verdict(
        passes as f64 >= 0.9 * seeds as f64 && fails as f64 >= 0.95 * seeds as f64,
        format!("null passes {passes}/{seeds}, shifted +1.5 fails {fails}/{seeds}"),
    )
}

fn criterion_07_logits_oracle_parity() -> Outcome {
    let world = ToyWorld::generate(500, 4.0, 1.0, 0.0, 7);
    let cfg = RunConfig::new(Strategy::new(StrategyKind::Reword, 1.0), DecodeConfig::Top1, 1000, 7);
    let (_, c) = compare_logits_oracle(&cfg, &world).unwrap();
    let auroc_diff = c.auroc_difference.unwrap_or(f64::INFINITY);
    verdict(
        c.ece_difference < 0.03 && auroc_diff < 0.03,
        format!(
            "ECE {:.4} vs logits {:.4} (diff {:.4}); AUROC {:?} vs {:?} (diff {auroc_diff:.4})",
            c.rephrase_report.ece,
            c.logits_report.ece,
            c.ece_difference,
            c.rephrase_report.auroc,
            c.logits_report.auroc
        ),
    )
}

fn criterion_08_more_draws_lower_ece() -> Outcome {
    let seeds = 50;
    let mut better = 0;
    for seed in 0..seeds {
        let world = ToyWorld::generate(200, 4.0, 1.0, 0.0, 800 + seed);
        let backend = world.backend();
        let cfg = RunConfig::new(Strategy::new(StrategyKind::Rephrase, 1.0), DecodeConfig::Top1, 10, seed);
        let run = run_evaluation(&cfg, &world.dataset(), &TemplateSet::default(), &backend, &backend).unwrap();
        let rows = sweep_draws(&run, &[1, 10]).unwrap();
        if rows[1].report.ece < rows[0].report.ece {
            better += 1;
        }
    }
    verdict(
        better as f64 >= 0.9 * seeds as f64,
        format!("ECE(10) < ECE(1) in {better}/{seeds} seeded runs"),
    )
}

fn mock_setup(dir: &Path) -> (Vec<Question>, MockBackend, String) {
    let questions: Vec<Question> = (0..12)
        .map(|i| {
            Question::with_texts(
                format!("m{i}"),
                format!("Which item number {i} is heaviest?"),
                ["a feather", "a brick", "a leaf", "a coin"],
                Some(label(i % 4)),
            )
            .unwrap()
        })
        .collect();
    let answers = [
        "The answer is B.",
        "A",
        "(C) a leaf",
        "I cannot tell.",
        "D. a coin",
        "B",
    ];
    let mut fixtures = Vec::new();
    for (qi, q) in questions.iter().enumerate() {
        let prompt = build_rephrase_prompt(StrategyKind::Rephrase, &q.stem).unwrap();
        for v in 0..3 {
            let stem = format!("Variant {v}: which item {qi} weighs most?");
            fixtures.push(Fixture::for_prompt(&prompt, stem.clone()));
            let answer_prompt = build_answer_prompt(&assemble_rephrased_question(&stem, q)).unwrap();
            for (a, text) in answers.iter().enumerate() {
                if (a + qi + v) % 3 != 0 {
                    fixtures.push(Fixture::for_prompt(&answer_prompt, *text));
                }
            }
        }
    }
    let path = dir.join("fixtures.jsonl");
    let lines: Vec<String> = fixtures.iter().map(|f| serde_json::to_string(f).unwrap()).collect();
    std::fs::write(&path, lines.join("\n")).unwrap();
    (
        questions,
        MockBackend::from_jsonl(&path).unwrap(),
        format!("mock:{}", path.display()),
    )
}

type Setup<'a> = (
    &'a str,
    Vec<Question>,
    &'a dyn CompletionBackend,
    StrategyKind,
    DecodeConfig,
);

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn criterion_09_determinism_and_replay() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();

    let world = ToyWorld::generate(60, 3.0, 1.0, 0.5, 9);
    let toy = world.backend();
    let (mock_questions, mock, mock_spec) = mock_setup(tmp.path());
    let setups: [Setup; 3] = [
        (
            "toy",
            world.dataset(),
            &toy,
            StrategyKind::Expansion,
            DecodeConfig::Top1,
        ),
        (
            "toy-topk",
            world.dataset(),
            &toy,
            StrategyKind::Hint,
            DecodeConfig::TopK { k: 40 },
        ),
        (
            "mock",
            mock_questions,
            &mock,
            StrategyKind::Rephrase,
            DecodeConfig::Top1,
        ),
    ];
    let mut summaries = 0;
    for (name, questions, backend, kind, decode) in &setups {
        let mut reference: Option<(Vec<u8>, Vec<u8>)> = None;
        for (run_no, threads) in [1usize, 4, 16, 4].into_iter().enumerate() {
            let mut cfg = RunConfig::new(Strategy::new(*kind, 0.7), *decode, 10, 99);
            cfg.rephraser = if *name == "mock" {
                mock_spec.clone()
            } else {
                "toy".into()
            };
            cfg.answerer = cfg.rephraser.clone();
            cfg.max_in_flight = threads;
            let run = run_evaluation(&cfg, questions, &TemplateSet::default(), *backend, *backend).unwrap();
            let dir = tmp.path().join(format!("{name}-{run_no}"));
            let paths = emit_report(&run, &dir).unwrap();
            let raw = read(&paths.raw);
            let summary = read(&paths.summary);

            let replayed = replay(&paths.raw, Some(cfg.clone())).unwrap().to_json();
            if replayed.as_bytes() != summary.as_slice() {
                problems.push(format!("{name}: library replay differs at {threads} threads"));
            }
            match &reference {
                None => reference = Some((raw, summary)),
                Some((r, s)) => {
                    if *r != raw || *s != summary {
                        problems.push(format!("{name}: output differs at {threads} threads"));
                    }
                }
            }
            summaries += 1;
        }
    }

    // the CLI end to end: two runs at different concurrency, then `metrics` replay
    let dataset = tmp.path().join("mock.jsonl");
    let lines: Vec<String> = setups[2].1.iter().map(reconf::dataset::to_arc_line).collect();
    std::fs::write(&dataset, lines.join("\n")).unwrap();
    let bin = env!("CARGO_BIN_EXE_reconf");
    let mut cli_outputs = Vec::new();
    for threads in ["1", "16"] {
        let out = tmp.path().join(format!("cli-{threads}"));
        let status = Command::new(bin)
            .args(["run", "--dataset"])
            .arg(&dataset)
            .args([
                "--strategy",
                "rephrase",
                "--decode",
                "top1",
                "--draws",
                "10",
                "--seed",
                "4",
                "--temp",
                "0.7",
            ])
            .args([
                "--rephraser-url",
                &mock_spec,
                "--answerer-url",
                &mock_spec,
                "--max-in-flight",
                threads,
            ])
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        cli_outputs.push((read(&out.join("raw.jsonl")), read(&out.join("summary.json"))));
        let replayed = tmp.path().join(format!("replayed-{threads}.json"));
        let status = Command::new(bin)
            .args(["metrics", "--raw"])
            .arg(out.join("raw.jsonl"))
            .arg("--summary")
            .arg(out.join("summary.json"))
            .arg("--out")
            .arg(&replayed)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        if read(&replayed) != read(&out.join("summary.json")) {
            problems.push(format!("CLI metrics replay differs ({threads} threads)"));
        }
    }
    if cli_outputs[0] != cli_outputs[1] {
        problems.push("CLI output differs between 1 and 16 threads".into());
    }

    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{summaries} library runs and 2 CLI runs byte-identical; replay exact")
        } else {
            problems.join("; ")
        },
    )
}

const DEMO: &str =
    "George wants to warm his hands quickly by rubbing them. Which skin surface will produce the most heat?";

fn criterion_10_prompt_fidelity() -> Outcome {
    let stem = "Which gas do plants absorb from the air?";
    let golden = [
        (
            StrategyKind::Reword,
            "[INST]Reword the following question:",
            "Respond with the reworded question only: [\\INST]",
            "George seeks to heat his hands swiftly by rubbing them. Which skin area will generate the maximum heat?",
            "[INST]Reword the following question: ",
        ),
        (
            StrategyKind::Rephrase,
            "[INST]Rephrase the following question:",
            "Respond with the rephrased question only: [\\INST]",
            "What type of skin texture on George's hands would generate the most heat through rapid rubbing to warm them effectively?",
            "[INST]Rephrase the following question: ",
        ),
        (
            StrategyKind::Paraphrase,
            "[INST]Semantically paraphrase the following question:",
            "Respond with the semantically paraphrased question only: [\\INST]",
            "How can George induce the highest thermal output by briskly rubbing his hands, and which part of the skin would be most effective?",
            "[INST]Semantically paraphrase the following question: ",
        ),
        (
            StrategyKind::Expansion,
            "[INST] Expand the following question with additional context:",
            "Respond with the expanded question only: [\\INST]",
            "In the context of seeking immediate relief from the biting cold and understanding the mechanisms behind heat generation through friction, what type of skin texture on George's hands would most effectively generate heat by rapid rubbing?",
            "[INST]Expand the following question with additional context: ",
        ),
    ];
    let mut problems = Vec::new();
    for (kind, demo_line, respond, target, ask) in golden {
        let expected = [demo_line, DEMO, respond, target, &format!("{ask}{stem}"), respond].join("\n");
        if build_rephrase_prompt(kind, stem).unwrap() != expected {
            problems.push(format!("{kind} template"));
        }
    }
    let hints = [
        "I think the answer should be",
        "I read online the answer is",
        "I vaguely remember the answer is",
    ];
    if HINT_PREFACES != hints {
        problems.push("hint prefaces".into());
    }
    let q = Question::with_texts("h", "Which is a metal?", ["wood", "iron"], None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let h = TemplateSet::default().build_hint_query(&q, &mut rng);
        if h.text != format!("Which is a metal? A. wood B. iron {} {}", hints[h.hint_index], h.label) {
            problems.push(format!("hint query {:?}", h.text));
        }
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "four rephrasing templates and three hint prefaces verbatim".into()
        } else {
            format!("mismatch: {}", problems.join(", "))
        },
    )
}

fn main() {
    let criteria: [fn() -> Outcome; 10] = [
        criterion_01_naive_baseline_identities,
        criterion_02_auroc_matches_pairwise_oracle,
        criterion_03_consistency_recovers_softmax,
        criterion_04_tempering_grid,
        criterion_05_calibrated_predictor,
        criterion_06_ks_validity_and_power,
        criterion_07_logits_oracle_parity,
        criterion_08_more_draws_lower_ece,
        criterion_09_determinism_and_replay,
        criterion_10_prompt_fidelity,
    ];
    let mut failed = 0;
    for (i, criterion) in criteria.into_iter().enumerate() {
        let started = std::time::Instant::now();
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {}: {} ({:.1}s)",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
