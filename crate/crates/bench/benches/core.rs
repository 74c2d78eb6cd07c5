use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfagree_core::estimation::{ted_receive, ted_send};
use rfagree_core::geometry::{find_cluster, random_frame, random_unit_vector, TagSet, TaggedDirection};
use rfagree_core::harness::{build_world, ExperimentConfig};
use rfagree_core::simnet::Mode;
use rfagree_core::{DirTag, EstimationConfig};

fn cluster_store(size: usize) -> Vec<TaggedDirection> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let center = random_unit_vector(&mut rng);
    (0..size)
        .map(|i| TaggedDirection {
            origin: i % 13,
            tag: if rng.random_bool(0.5) { DirTag::Ready1 } else { DirTag::Ready2 },
            direction: center.rotate_about(&random_unit_vector(&mut rng), rng.random_range(0.0..0.3)),
            arrival_order: i as u64,
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    for size in [9, 13, 26] {
        let store = cluster_store(size);
        c.bench_function(&format!("find_cluster/{size}"), |b| b.iter(|| find_cluster(&store, TagSet::READY, 0.2, 1)));
    }

    let cfg = EstimationConfig::new(0.02, 20_000, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (sender, receiver) = (random_frame(&mut rng), random_frame(&mut rng));
    let payload = ted_send(&random_unit_vector(&mut rng), &sender, &cfg);
    c.bench_function("ted_receive/20000", |b| b.iter(|| ted_receive(&payload, &receiver, &mut rng, &cfg)));

    for n in [9, 13] {
        let exp = ExperimentConfig { mode: Mode::Arcast, n, t: (n - 1) / 4, ..Default::default() };
        c.bench_function(&format!("arcast_run/{n}"), |b| {
            b.iter_batched(
                || build_world(&exp, 0).unwrap(),
                |mut w| w.run_until(|_| false, 1_000_000).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
