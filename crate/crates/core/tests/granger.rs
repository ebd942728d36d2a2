use infonet_core::estimators::RidgePolicy;
use infonet_core::granger::{gc_matrix, select_order_bic, transfer_entropy_gaussian, GcConfig, Series};
use infonet_core::synth::{gen_var, CouplingSpec};

fn modal_order(coefs: &[(usize, f64)], seeds: u64) -> (usize, usize) {
    let ridge = RidgePolicy::default();
    let mut counts = [0usize; 21];
    for seed in 0..seeds {
        let spec = CouplingSpec::new(1, coefs.iter().map(|&(lag, c)| (0, 0, lag, c)).collect(), vec![1.0], seed).unwrap();
        let p = gen_var(&spec, 100_000).unwrap();
        let order = select_order_bic(Series::new("X0", p.column(0)), None, 20, &ridge).unwrap();
        counts[order] += 1;
    }
    let modal = (1..=20).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))).unwrap();
    (modal, counts[modal])
}

#[test]
fn bic_selects_ar1() {
    let (modal, hits) = modal_order(&[(1, 0.6)], 100);
    assert_eq!(modal, 1);
    assert!(hits >= 90, "order 1 chosen {hits}/100 times");
}

#[test]
fn bic_selects_ar3() {
    let (modal, hits) = modal_order(&[(1, 0.2), (3, 0.6)], 100);
    assert_eq!(modal, 3);
    assert!(hits >= 90, "order 3 chosen {hits}/100 times");
}

#[test]
fn transfer_entropy_is_half_the_gc() {
    let spec = CouplingSpec::new(2, vec![(1, 1, 1, 0.5), (0, 1, 1, 0.9)], vec![1.0, 1.0], 5).unwrap();
    let p = gen_var(&spec, 1_000_000).unwrap();
    let te = transfer_entropy_gaussian(
        Series::new("X0", p.column(0)),
        Series::new("X1", p.column(1)),
        1,
        &RidgePolicy::default(),
    )
    .unwrap();
    assert!((te - 0.5 * 1.81f64.ln()).abs() < 0.005, "TE = {te}");
}

#[test]
fn independent_panels_give_alpha_edge_fraction() {
    let config = GcConfig::default();
    let (mut significant, mut total) = (0, 0);
    for seed in 0..30 {
        let p = gen_var(&CouplingSpec::independent(5, 300 + seed), 10_080).unwrap();
        let net = gc_matrix(&p, &config).unwrap();
        total += net.edges.len();
        significant += net.edges.iter().filter(|e| e.significant).count();
    }
    assert_eq!(total, 600);
    let rate = significant as f64 / total as f64;
    assert!((0.002..=0.025).contains(&rate), "rate {rate}");
}

#[test]
fn chain_attenuates_indirect_link() {
    let spec = CouplingSpec::new(3, vec![(0, 1, 1, 0.8), (1, 2, 1, 0.8)], vec![1.0; 3], 8).unwrap();
    let p = gen_var(&spec, 10_080).unwrap();
    let net = gc_matrix(&p, &GcConfig::default()).unwrap();
    let w = &net.adjacency.weights;
    assert!(w[(0, 1)] > 0.0 && w[(1, 2)] > 0.0);
    assert!(w[(0, 2)] < w[(0, 1)], "X0->X2 {} vs X0->X1 {}", w[(0, 2)], w[(0, 1)]);
    assert_eq!(w[(1, 0)], 0.0);
    assert_eq!(w[(2, 1)], 0.0);
}
