use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use dynbv_core::analytic::{f0, f1, SeriesConfig};
use dynbv_core::drift::trial_rng;
use dynbv_core::ea::Mutator;
use dynbv_core::oracle::{exact_discard_distribution, exact_tiny_chain_drift, CategoryProfile};
use dynbv_core::{BitString, EaParams, GenerationRanking, Population, Rational, Simulator};

fn mutation(c: &mut Criterion) {
    let mut rng = trial_rng(1, 0);
    let m = Mutator::new(3000, 1.0).unwrap();
    let mut flips = Vec::new();
    c.bench_function("sample_flips n=3000 c=1", |b| {
        b.iter(|| {
            m.sample_flips(&mut rng, &mut flips);
            black_box(flips.len())
        })
    });
    let x = BitString::with_zeros_at(3000, &[1, 5, 900]);
    c.bench_function("mutate n=3000 c=1", |b| b.iter(|| black_box(m.mutate(&x, &mut rng))));
}

fn steps(c: &mut Criterion) {
    let n = 3000;
    let zeros: Vec<usize> = (0..15).map(|i| i * 200).collect();
    let x = BitString::with_zeros_at(n, &zeros);
    for (mu, cval) in [(2, 1.0), (2, 2.2), (10, 2.0)] {
        let mut sim = Simulator::new(EaParams::new(n, mu, cval).unwrap()).unwrap();
        let mut rng = trial_rng(2, mu as u64);
        c.bench_function(&format!("degenerate step mu={mu} c={cval}"), |b| {
            b.iter_batched(
                || Population::degenerate(x.clone(), mu).unwrap(),
                |mut pop| black_box(sim.step(&mut pop, &mut rng)),
                BatchSize::SmallInput,
            )
        });
    }
}

fn ranking(c: &mut Criterion) {
    let mut rng = trial_rng(3, 0);
    let x = BitString::with_zeros_at(3000, &[3, 70, 1500]);
    let y = BitString::with_zeros_at(3000, &[70, 1500, 2999]);
    c.bench_function("fresh ranking compare", |b| {
        b.iter(|| {
            let mut rank = GenerationRanking::new();
            black_box(rank.compare(&x, &y, &mut rng))
        })
    });
}

fn formulas(c: &mut Criterion) {
    let cfg = SeriesConfig::default();
    c.bench_function("f0 c=2.4", |b| b.iter(|| f0(black_box(2.4), &cfg).unwrap()));
    c.bench_function("f1 c=2.4", |b| b.iter(|| f1(black_box(2.4), &cfg).unwrap()));
    let profile = CategoryProfile::a_state(4, 4).unwrap();
    c.bench_function("exact discard A(4,4)", |b| {
        b.iter(|| exact_discard_distribution(black_box(&profile)).unwrap())
    });
    c.bench_function("tiny chain n=4 mu=2", |b| {
        b.iter(|| exact_tiny_chain_drift(4, 2, Rational::from_integer(1), 2).unwrap())
    });
}

criterion_group!(benches, mutation, steps, ranking, formulas);
criterion_main!(benches);
