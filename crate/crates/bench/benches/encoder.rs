use atg_core::encoder::{encode_sector, ContinuousSector, EncoderConfig};
use atg_core::model::{Point, RouteId};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random polylines across a 300 x 200 nmi box.
fn random_sector(routes: usize, seed: u64) -> ContinuousSector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sector = ContinuousSector { fixes: Default::default(), routes: Default::default() };
    for r in 0..routes {
        let mut names = Vec::new();
        for k in 0..4 {
            let name = format!("F{r}_{k}");
            let x = 100.0 * k as f64 + rng.random_range(-15.0..15.0);
            let y = rng.random_range(0.0..200.0);
            sector.fixes.insert(name.clone(), Point::new(x, y));
            names.push(name);
        }
        sector.routes.insert(RouteId::from(format!("R{}", r + 1).as_str()), names);
    }
    sector
}

fn encoder(c: &mut Criterion) {
    let cfg = EncoderConfig::default();
    let sectors: Vec<_> = (0..20).map(|s| random_sector(7, s)).collect();
    c.bench_function("encode_sector/7_routes", |b| {
        b.iter(|| sectors.iter().filter_map(|s| encode_sector(s, &cfg).ok()).map(|g| g.nodes.len()).sum::<usize>())
    });
}

criterion_group!(benches, encoder);
criterion_main!(benches);
