//! Sequential against parallel execution of the 4-dice tournament workload.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dicelab::dice::{beats_fast, sample_balanced, IntervalSpec};
use dicelab::mc::{available_workers, run_parallel, run_sequential};
use dicelab::tournaments::{classify4, estimate_tournament4, PAIRS4};

const TRIALS: u64 = 2_000;

fn tournament_task(
    spec: IntervalSpec,
) -> impl Fn(&mut rand_chacha::ChaCha8Rng, u64, &mut [u64; 4]) -> dicelab::Result<()> + Sync {
    move |rng, _, counts| {
        let mut dice = Vec::with_capacity(4);
        for _ in 0..4 {
            dice.push(sample_balanced(&spec, rng, 1_000)?);
        }
        let mut m = [0i64; 6];
        for (slot, &(i, j)) in m.iter_mut().zip(&PAIRS4) {
            *slot = beats_fast(&dice[i], &dice[j])?.margin;
        }
        counts[classify4(m) as usize] += 1;
        Ok(())
    }
}

fn bench(c: &mut Criterion) {
    let spec = IntervalSpec::symmetric(101).unwrap();
    let mut group = c.benchmark_group("tournament4_n101");
    group.sample_size(10);
    group.bench_function("run_sequential", |b| {
        b.iter(|| run_sequential::<[u64; 4], _>(TRIALS, 1, tournament_task(spec)).unwrap())
    });
    for w in [1usize, 2, 4, 8] {
        group.bench_with_input(BenchmarkId::new("run_parallel", w), &w, |b, &w| {
            b.iter(|| run_parallel::<[u64; 4], _>(TRIALS, w, 1, tournament_task(spec)).unwrap())
        });
    }
    group.bench_function("estimate_tournament4_all_threads", |b| {
        b.iter(|| estimate_tournament4(&spec, TRIALS, 1, available_workers()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
