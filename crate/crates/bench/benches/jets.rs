use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fsmap::jet::monomials_up_to;
use fsmap::{flow_time1_jet, jet_compose, jet_mul, parse_mapspec, takens_embed_unipotent, Jet, JetVector};

const FOLD: &str = "dims 2 1\norder 6\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 1 : -1\n\
    [G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : -1\n";

/// Dense jet in `m` variables with deterministic coefficients.
fn dense(m: usize, order: u32, seed: f64) -> Jet {
    let mut j = Jet::zero(m, order);
    for (i, idx) in monomials_up_to(m, order).into_iter().enumerate() {
        j.add_term(idx, ((i as f64 + 1.0) * seed).sin());
    }
    j
}

fn jet_ops(c: &mut Criterion) {
    let a = dense(3, 6, 0.37);
    let b = dense(3, 6, 0.91);
    c.bench_function("jet_mul 3 vars order 6", |bch| bch.iter(|| jet_mul(black_box(&a), black_box(&b)).unwrap()));

    let mut inner: Vec<Jet> = (0..3).map(|i| dense(3, 6, 0.2 + 0.1 * i as f64)).collect();
    for (i, comp) in inner.iter_mut().enumerate() {
        comp.set_coeff(fsmap::MultiIndex::zero(3), 0.0);
        comp.add_term(fsmap::MultiIndex::unit(3, i), 1.0);
    }
    let inner = JetVector::new(inner).unwrap();
    c.bench_function("jet_compose 3 vars order 6", |bch| {
        bch.iter(|| jet_compose(black_box(&a), black_box(&inner)).unwrap())
    });
}

fn flows(c: &mut Criterion) {
    let h = parse_mapspec(FOLD).unwrap().spec.extended_map_jet();
    let emb = takens_embed_unipotent(&h, 6).unwrap();
    c.bench_function("flow_time1_jet fold order 6", |bch| {
        bch.iter(|| flow_time1_jet(black_box(&emb.v), 6).unwrap())
    });
    c.bench_function("takens_embed_unipotent fold order 6", |bch| {
        bch.iter(|| takens_embed_unipotent(black_box(&h), 6).unwrap())
    });
}

criterion_group!(benches, jet_ops, flows);
criterion_main!(benches);
