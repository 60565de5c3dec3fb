//! One worker against the full pool for the two parallel hot spots.
//! Built without the `parallel` feature both variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rlabo::acquisition::{candidate_set, maximize_af};
use rlabo::benchmarks::{sample_uniform, Benchmark, BenchmarkKind};
use rlabo::env::{state_len, EnvConfig};
use rlabo::gp::{GpModel, ObservationSet};
use rlabo::neural::{Arch, PolicyParams};
use rlabo::{parallel, ppo, rng};

const WORKERS: [(&str, usize); 2] = [("sequential", 1), ("all-cores", 0)];

fn inner_optimizer(c: &mut Criterion) {
    let b = Benchmark::new(BenchmarkKind::Eggholder);
    let mut r = rng::stream(0, "bench", &[]);
    let pts = sample_uniform(b.bounds(), 30, &mut r).unwrap();
    let ys = pts.iter().map(|p| b.evaluate(p).unwrap()).collect();
    let model = GpModel::fit(&ObservationSet::new(pts, ys).unwrap(), b.bounds()).unwrap();
    let spec = candidate_set()[2];

    let mut g = c.benchmark_group("maximize_af");
    for (name, jobs) in WORKERS {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            parallel::with_jobs(jobs, || {
                bench.iter(|| maximize_af(&model, spec, b.bounds(), &mut rng::stream(1, "af", &[])))
            })
        });
    }
    g.finish();
}

fn episode_collection(c: &mut Criterion) {
    let env = EnvConfig { horizon: 10, ..EnvConfig::new(BenchmarkKind::Ackley) };
    let params = PolicyParams::init(Arch::new(state_len(2)), &mut rng::stream(0, "init", &[]));

    let mut g = c.benchmark_group("collect_8_episodes");
    g.sample_size(10);
    for (name, jobs) in WORKERS {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            parallel::with_jobs(jobs, || {
                bench.iter(|| {
                    parallel::map_indexed(8, |slot| ppo::collect_episode(&params, &env, 0, 0, slot, slot).unwrap())
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, inner_optimizer, episode_collection);
criterion_main!(benches);
