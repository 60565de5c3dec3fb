//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any hard criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 1 3`.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rlabo::acquisition::{candidate_set, BASE_WEIGHT};
use rlabo::benchmarks::BenchmarkKind;
use rlabo::env::{compute_reward, state_len, EnvConfig};
use rlabo::gp::{GpModel, ObservationSet};
use rlabo::neural::{Arch, Checkpoint, CheckpointMeta, PolicyParams};
use rlabo::ppo::{self, loss_and_grad, LossWeights, Sample, TrainConfig};
use rlabo::runner::{self, CompareConfig, ComparisonReport};
use rlabo::{parallel, rng};

use common::{grid_model, grid_scores, oracle_gap, random_batch, random_dataset, random_params};

// Tolerances and budgets.
const GP_TOL: f64 = 1e-8;
const GP_BUDGET: Duration = Duration::from_secs(10);
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
/// Coordinates per parallel work unit in the finite-difference sweep.
const FD_CHUNK: usize = 256;
const FD_FLOOR: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const FORMULA_TOL: f64 = 1e-10;
const GRID_SIDE: usize = 256;
const GRID_FRACTION: f64 = 0.99;
const GRID_BUDGET: Duration = Duration::from_secs(300);
const TRAIN_SEEDS: [u64; 3] = [0, 1, 2];
const COMPARE_SEEDS: usize = 20;
const COMPARE_HORIZON: usize = 30;
const REGRET_FACTOR: f64 = 1.05;
const REGRET_MIN_BENCHMARKS: usize = 3;

struct Outcome {
    pass: bool,
    detail: String,
    /// Soft criteria warn instead of failing.
    soft: bool,
}

impl Outcome {
    fn hard(pass: bool, detail: String) -> Self {
        Self { pass, detail, soft: false }
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn gp_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1, "acceptance-gp", &[]);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let n = 1 + i * 39 / 49;
        let (obs, bounds) = random_dataset(n, &mut r);
        let m = GpModel::fit(&obs, &bounds).expect("fit");
        worst = worst.max(oracle_gap(&m, 20, &mut r));
    }
    let took = start.elapsed();
    Outcome::hard(
        worst < GP_TOL && took < GP_BUDGET,
        format!("max abs gap {worst:.2e} over 50 datasets (n = 1..40), {}", secs(took)),
    )
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let terms = [
        LossWeights::composite(0.5, 0.01),
        LossWeights { clip: 1.0, value: 0.0, entropy: 0.0 },
        LossWeights { clip: 0.0, value: 1.0, entropy: 0.0 },
        LossWeights { clip: 0.0, value: 0.0, entropy: 1.0 },
    ];
    let mut worst = [0.0f64; 4];
    for b in 0..10u64 {
        let mut r = rng::stream(2, "acceptance-grad", &[b]);
        let p = random_params(state_len(2), &mut r);
        let batch = random_batch(&p, 32, &mut r);
        let grads: Vec<Vec<f64>> =
            terms.iter().map(|w| loss_and_grad(&batch, &p, 0.2, *w, true).unwrap().1.unwrap()).collect();
        let eval = |q: &PolicyParams| loss_and_grad(&batch, q, 0.2, terms[0], false).unwrap().0;
        let n = p.len();
        // coordinates are independent; spread chunks of them over the workers,
        // perturbing one private copy of the parameters per chunk
        let chunks = parallel::map_indexed(n.div_ceil(FD_CHUNK), |c| {
            let mut q = p.clone();
            (c * FD_CHUNK..n.min((c + 1) * FD_CHUNK))
                .map(|i| {
                    let x = q.flat()[i];
                    q.flat_mut()[i] = x + FD_STEP;
                    let hi = eval(&q);
                    q.flat_mut()[i] = x - FD_STEP;
                    let lo = eval(&q);
                    q.flat_mut()[i] = x;
                    let fd = [hi.total - lo.total, hi.clip - lo.clip, hi.value - lo.value, hi.entropy - lo.entropy]
                        .map(|d| d / (2.0 * FD_STEP));
                    let mut e = [0.0; 4];
                    for k in 0..4 {
                        let g = grads[k][i];
                        e[k] = (g - fd[k]).abs() / g.abs().max(fd[k].abs()).max(FD_FLOOR);
                    }
                    e
                })
                .collect::<Vec<_>>()
        });
        let errs = chunks.into_iter().flatten();
        for e in errs {
            for k in 0..4 {
                worst[k] = worst[k].max(e[k]);
            }
        }
    }
    let took = start.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    Outcome::hard(
        max < FD_REL_TOL && took < GRAD_BUDGET,
        format!(
            "max relative error total {:.1e}, clip {:.1e}, value {:.1e}, entropy {:.1e} on 10 batches of 32, {}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            secs(took)
        ),
    )
}

fn formulas() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if !((got - want).abs() <= FORMULA_TOL) {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    };

    let obs = ObservationSet::new(vec![vec![0.0, 0.0]], vec![3.0]).unwrap();
    check("reward", compute_reward(5.0, &obs, 2), 2.0 / (3f64.ln() + 1.0));
    check("reward below incumbent", compute_reward(2.0, &obs, 2), 0.0);

    for (got, want) in ppo::discounted_returns(&[0.0, 0.0, 1.0], 1.0).iter().zip([1.0, 1.0, 1.0]) {
        check("returns gamma 1", *got, want);
    }
    for (got, want) in ppo::discounted_returns(&[1.0, 1.0], 0.5).iter().zip([1.5, 1.0]) {
        check("returns gamma 0.5", *got, want);
    }
    for (got, want) in ppo::advantages(&[1.5, 1.0], &[1.0, 1.0]).unwrap().iter().zip([0.5, 0.0]) {
        check("advantages", *got, want);
    }

    check("clip above", ppo::clipped_term(1.5, 1.0, 0.2), -1.2);
    check("clip below, negative advantage", ppo::clipped_term(0.5, -1.0, 0.2), 0.8);

    // zero output layers: uniform policy, zero value
    let mut p = PolicyParams::init(Arch::new(state_len(2)), &mut rng::stream(3, "acceptance-formula", &[]));
    p.scale_heads(0.0, 0.0);
    let s = vec![0.1, 0.2, 0.3, 0.4];
    let at = |action: usize, old_prob: f64, ret: f64, advantage: f64| Sample {
        state: s.clone(),
        action,
        old_prob,
        ret,
        advantage,
    };
    let unit = vec![at(0, 0.2, 0.0, 0.7), at(3, 0.2, 0.0, -0.2), at(4, 0.2, 0.0, 1.1)];
    check("clip at ratio 1", ppo::clip_loss(&unit, &p, 0.2).unwrap(), -(0.7 - 0.2 + 1.1));
    check("entropy uniform", ppo::entropy_loss(&unit[..1], &p).unwrap(), -(5f64.ln()));
    check("value", ppo::value_loss(&[at(0, 0.2, 1.0, 0.0), at(0, 0.2, 2.0, 0.0)], &p).unwrap(), 5.0);

    let mut det = p.clone();
    let a_len = det.arch().actor_len();
    det.flat_mut()[a_len - 5] = 1e4;
    check("entropy deterministic", ppo::entropy_loss(&unit[..1], &det).unwrap(), 0.0);

    let w = LossWeights::composite(0.5, 0.01);
    check("weighted sum", w.clip * -2.0 + w.value * 4.0 + w.entropy * -1.6, -0.016);
    let batch = random_batch(
        &random_params(4, &mut rng::stream(3, "acceptance-formula", &[1])),
        8,
        &mut rng::stream(3, "b", &[]),
    );
    let q = random_params(4, &mut rng::stream(3, "acceptance-formula", &[2]));
    let parts = loss_and_grad(&batch, &q, 0.2, w, false).unwrap().0;
    check(
        "total loss composition",
        ppo::total_loss(&batch, &q, 0.2, 0.5, 0.01).unwrap(),
        parts.clip + 0.5 * parts.value + 0.01 * parts.entropy,
    );
    check("w1 = w2 = 0", ppo::total_loss(&batch, &q, 0.2, 0.0, 0.0).unwrap(), ppo::clip_loss(&batch, &q, 0.2).unwrap());
    check("ucb", candidate_set()[2].score(1.0, 0.5), 1.0 + BASE_WEIGHT * 0.5);

    let pass = failures.is_empty();
    let detail = if pass { "all hand-derived examples within 1e-10".to_owned() } else { failures.join("; ") };
    Outcome::hard(pass, detail)
}

fn inner_optimizer() -> Outcome {
    let start = Instant::now();
    let mut worst = (f64::INFINITY, String::new());
    for kind in BenchmarkKind::ALL {
        for j in 0..10u64 {
            let m = grid_model(kind, 100 + j);
            let mut r = rng::stream(4, kind.name(), &[j]);
            for (spec, score) in candidate_set().iter().zip(grid_scores(&m, GRID_SIDE, &mut r)) {
                if score < worst.0 {
                    worst = (score, format!("{kind} fit {j} beta {}", spec.beta()));
                }
            }
        }
    }
    let took = start.elapsed();
    Outcome::hard(
        worst.0 >= GRID_FRACTION && took < GRID_BUDGET,
        format!("worst normalized value {:.4} ({}) over 250 cases, {}", worst.0, worst.1, secs(took)),
    )
}

struct Trained {
    /// Seed-0 policy per benchmark, reused by the comparison.
    policies: BTreeMap<BenchmarkKind, PolicyParams>,
    convergence: Outcome,
}

fn block_means(curve: &ppo::LearningCurve) -> (f64, f64) {
    let avg = curve.five_episode_averages();
    let k = (avg.len() / 5).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&avg[..k]), mean(&avg[avg.len() - k..]))
}

fn convergence() -> Trained {
    let start = Instant::now();
    let mut policies = BTreeMap::new();
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in BenchmarkKind::ALL {
        let env = EnvConfig::new(kind);
        let mut first = 0.0;
        let mut last = 0.0;
        for &seed in &TRAIN_SEEDS {
            let cfg = TrainConfig { seed, ..TrainConfig::default() };
            let out = ppo::train(&EnvConfig { seed, ..env.clone() }, &cfg).expect("training");
            let (f, l) = block_means(&out.curve);
            first += f / TRAIN_SEEDS.len() as f64;
            last += l / TRAIN_SEEDS.len() as f64;
            if seed == TRAIN_SEEDS[0] {
                policies.insert(kind, out.params);
            }
        }
        let ok = last >= first;
        pass &= ok;
        lines.push(format!("{kind} {first:.3} -> {last:.3}{}", if ok { "" } else { " (down)" }));
    }
    Trained {
        policies,
        convergence: Outcome::hard(
            pass,
            format!("first -> last 20% mean reward, 3 seeds: {}; {}", lines.join(", "), secs(start.elapsed())),
        ),
    }
}

fn comparison(policies: &BTreeMap<BenchmarkKind, PolicyParams>) -> (ComparisonReport, Outcome) {
    let start = Instant::now();
    let cfg = CompareConfig { seeds: COMPARE_SEEDS, horizon: COMPARE_HORIZON, ..CompareConfig::default() };
    let rep = runner::compare(&BenchmarkKind::ALL, policies, &cfg).expect("comparison");
    let mut above_worst = true;
    let mut near_best = 0;
    let mut lines = Vec::new();
    for b in &rep.benchmarks {
        let policy = b.summary("policy").unwrap().mean_final_best;
        let fixed: Vec<f64> = b.summaries.iter().filter(|s| s.method != "policy").map(|s| s.mean_final_best).collect();
        let worst = fixed.iter().copied().fold(f64::INFINITY, f64::min);
        let best = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // regret: distance below the global optimum
        let (regret, best_regret) = (b.optimum - policy, b.optimum - best);
        let near = regret <= REGRET_FACTOR * best_regret;
        above_worst &= policy >= worst;
        near_best += near as usize;
        lines.push(format!(
            "{} regret {regret:.3} vs best fixed {best_regret:.3}{}{}",
            b.benchmark,
            if near { "" } else { " (not within 5%)" },
            if policy >= worst { "" } else { " (below worst fixed)" },
        ));
    }
    let pass = above_worst && near_best >= REGRET_MIN_BENCHMARKS;
    let detail = format!("{}; within 5% on {near_best}/5, {}", lines.join(", "), secs(start.elapsed()));
    (rep, Outcome::hard(pass, detail))
}

fn pattern(rep: &ComparisonReport) -> Outcome {
    match runner::pattern_check(rep) {
        Some(p) => Outcome {
            pass: p.explore_holds() && p.exploit_holds(),
            detail: format!(
                "mean rank beta=inf complex {:.2} / simple {:.2}; beta=0 complex {:.2} / simple {:.2}",
                p.explore_rank_complex, p.explore_rank_simple, p.exploit_rank_complex, p.exploit_rank_simple
            ),
            soft: true,
        },
        None => Outcome { pass: false, detail: "benchmarks missing from report".into(), soft: true },
    }
}

fn artifacts(env: &EnvConfig, cfg: &TrainConfig, compare_cfg: &CompareConfig, jobs: usize) -> Vec<u8> {
    // configs pass through their manifest form before use
    let env: EnvConfig = serde_json::from_str(&serde_json::to_string(env).unwrap()).unwrap();
    let cfg: TrainConfig = serde_json::from_str(&serde_json::to_string(cfg).unwrap()).unwrap();
    let compare_cfg: CompareConfig = serde_json::from_str(&serde_json::to_string(compare_cfg).unwrap()).unwrap();
    parallel::with_jobs(jobs, || {
        let out = ppo::train(&env, &cfg).unwrap();
        let meta = CheckpointMeta {
            benchmark: env.benchmark.to_string(),
            seed: cfg.seed,
            config_hash: ppo::config_hash(&env, &cfg),
        };
        let mut bytes = Checkpoint::new(&out.params, meta).to_json().unwrap().into_bytes();
        out.curve.write_csv(&mut bytes).unwrap();
        let policies = BenchmarkKind::ALL.iter().map(|&b| (b, out.params.clone())).collect();
        let rep = runner::compare(&BenchmarkKind::ALL, &policies, &compare_cfg).unwrap();
        rep.write_summary_csv(&mut bytes).unwrap();
        for b in &rep.benchmarks {
            runner::write_trace_csv(&mut bytes, &b.traces).unwrap();
            b.write_curves_csv(&mut bytes).unwrap();
        }
        bytes
    })
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let env = EnvConfig { horizon: 8, seed: 5, ..EnvConfig::new(BenchmarkKind::Levy) };
    let cfg = TrainConfig { updates: 3, episodes_per_update: 6, seed: 5, ..TrainConfig::default() };
    let compare_cfg = CompareConfig { seeds: 3, horizon: 8, seed: 9, ..CompareConfig::default() };
    let reference = artifacts(&env, &cfg, &compare_cfg, 1);
    let mut same = true;
    for jobs in [1, 2, 4, 0] {
        same &= artifacts(&env, &cfg, &compare_cfg, jobs) == reference;
    }
    Outcome::hard(
        same,
        format!(
            "checkpoint and CSV bytes identical for jobs 1, 2, 4 and all cores ({} bytes), {}",
            reference.len(),
            secs(start.elapsed())
        ),
    )
}

fn report(n: usize, name: &str, o: &Outcome) -> bool {
    let status = match (o.pass, o.soft) {
        (true, _) => "PASS",
        (false, true) => "WARN",
        (false, false) => "FAIL",
    };
    println!("criterion {n} {name}: {status} {}", o.detail);
    o.pass || o.soft
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut ok = true;

    if on(1) {
        ok &= report(1, "gp-oracle-equivalence", &gp_oracle());
    }
    if on(2) {
        ok &= report(2, "gradient-correctness", &gradients());
    }
    if on(3) {
        ok &= report(3, "formula-unit-suite", &formulas());
    }
    if on(4) {
        ok &= report(4, "inner-optimizer-adequacy", &inner_optimizer());
    }
    if on(5) || on(6) || on(7) {
        let trained = convergence();
        if on(5) {
            ok &= report(5, "training-convergence", &trained.convergence);
        }
        if on(6) || on(7) {
            let (rep, outcome) = comparison(&trained.policies);
            if on(6) {
                ok &= report(6, "comparison-claim", &outcome);
            }
            if on(7) {
                ok &= report(7, "qualitative-pattern", &pattern(&rep));
            }
        }
    }
    if on(8) {
        ok &= report(8, "determinism", &determinism());
    }
    if !ok {
        std::process::exit(1);
    }
}
