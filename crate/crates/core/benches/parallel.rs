use std::sync::Arc;

use coarea_core::coarea::{build_grid, GridSpec};
use coarea_core::gpc::{build_targets, GpcBasis};
use coarea_core::nullfield::{discretize_batch, SourceLayout};
use coarea_core::shape::random_octagon;
use criterion::{criterion_group, criterion_main, Criterion};

fn discretization(c: &mut Criterion) {
    let shape = Arc::new(random_octagon(5.0, 4.0).unwrap());
    let grid = build_grid(&shape, GridSpec::Polygon { m_q: 15, n_q: 12 }).unwrap();
    let layout = SourceLayout::new(shape.clone(), 80, 1).unwrap();
    let sources = layout.functionals(1.0);
    let run = || {
        let t = build_targets(&grid, GpcBasis::Legendre, 1.0, 27, 0).unwrap();
        let s = discretize_batch(&grid, &sources).unwrap();
        (t, s)
    };

    let mut group = c.benchmark_group("discretize_octagon_15x12_L80");
    group.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_function("one_thread", |b| b.iter(|| single.install(run)));
        group.bench_function(format!("pool_{}_threads", rayon::current_num_threads()), |b| b.iter(run));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| b.iter(run));
    group.finish();
}

criterion_group!(benches, discretization);
criterion_main!(benches);
