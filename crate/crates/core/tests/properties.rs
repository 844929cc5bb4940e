use proptest::prelude::*;
use spectral_fl::adversary::{min_max, steer_direction};
use spectral_fl::aggregators::{AggregatorRule, RuleConfig, RuleKind};
use spectral_fl::fedsim::dirichlet_partition;
use spectral_fl::spectral::{build_subspace, spectral_select, SpectralKrumConfig};
use spectral_fl::tensor::{
    orthogonal_energy, pairwise_sq_distances, BufferMatrix, Rng, SubspaceModel, UpdateVector,
};

fn vectors(
    n: std::ops::RangeInclusive<usize>,
    d: usize,
) -> impl Strategy<Value = Vec<UpdateVector>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n).prop_map(|rows| {
        rows.into_iter()
            .map(|r| UpdateVector::new(r).unwrap())
            .collect()
    })
}

fn rule(kind: RuleKind, f: usize) -> AggregatorRule {
    let cfg = RuleConfig {
        f_byzantine: f,
        ..Default::default()
    };
    let spectral = SpectralKrumConfig {
        f_byzantine: f,
        warmup_rounds: 0,
        ..Default::default()
    };
    AggregatorRule::new(kind, cfg, spectral).unwrap()
}

fn mean_of(rows: &[UpdateVector], members: &[usize]) -> Vec<f64> {
    let d = rows[0].dim();
    (0..d)
        .map(|k| members.iter().map(|&i| rows[i][k]).sum::<f64>() / members.len() as f64)
        .collect()
}

fn identity_model(d: usize, tau: f64) -> SubspaceModel {
    SubspaceModel {
        basis: (0..d)
            .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
        center: UpdateVector::zeros(d),
        tau,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn distances_are_a_symmetric_zero_diagonal_matrix(u in vectors(2..=8, 4)) {
        let m = pairwise_sq_distances(&u).unwrap();
        for i in 0..u.len() {
            prop_assert_eq!(m[i][i], 0.0);
            for j in 0..u.len() {
                prop_assert_eq!(m[i][j], m[j][i]);
                prop_assert!(m[i][j] >= 0.0);
            }
        }
    }

    #[test]
    fn buffer_keeps_the_last_b_rows(rows in vectors(1..=30, 2), cap in 1usize..10) {
        let mut buf = BufferMatrix::new(cap).unwrap();
        for r in &rows {
            buf.push(r.clone()).unwrap();
        }
        let kept: Vec<UpdateVector> = buf.rows().cloned().collect();
        let start = rows.len().saturating_sub(cap);
        prop_assert_eq!(kept, rows[start..].to_vec());
    }

    /// Exact for order-statistic and Krum-type rules, up to rounding for the
    /// iterative and averaging ones.
    #[test]
    fn rules_are_permutation_invariant(u in vectors(7..=9, 3), seed in any::<u64>()) {
        // exact ties make any deterministic tie-break order-dependent
        let dist = pairwise_sq_distances(&u).unwrap();
        let mut flat: Vec<f64> = (0..u.len()).flat_map(|i| dist[i][i + 1..].to_vec()).collect();
        flat.sort_by(f64::total_cmp);
        prop_assume!(flat.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let mut perm: Vec<usize> = (0..u.len()).collect();
        Rng::new(seed).shuffle(&mut perm);
        let shuffled: Vec<UpdateVector> = perm.iter().map(|&i| u[i].clone()).collect();
        for kind in [
            RuleKind::Mean,
            RuleKind::TrimmedMean,
            RuleKind::CoordMedian,
            RuleKind::GeometricMedian,
            RuleKind::FullKrum,
            RuleKind::MultiKrum,
        ] {
            let a = rule(kind, 2).aggregate(&u, &mut Rng::new(0)).unwrap();
            let b = rule(kind, 2).aggregate(&shuffled, &mut Rng::new(0)).unwrap();
            let exact = matches!(kind, RuleKind::CoordMedian);
            for (x, y) in a.aggregate.iter().zip(b.aggregate.iter()) {
                if exact {
                    prop_assert_eq!(x, y, "{}", kind);
                } else {
                    let tol = if kind == RuleKind::GeometricMedian { 1e-6 } else { 1e-9 };
                    prop_assert!((x - y).abs() <= tol * (1.0 + x.abs()), "{}: {} vs {}", kind, x, y);
                }
            }
            let mapped: Vec<usize> = {
                let mut s: Vec<usize> = b.selected_indices.iter().map(|&i| perm[i]).collect();
                s.sort_unstable();
                s
            };
            // selection sets only agree when scores are untied
            let untied = a.scores.as_ref().is_some_and(|s| {
                let mut s = s.clone();
                s.sort_by(f64::total_cmp);
                s.windows(2).all(|w| w[1] - w[0] > 1e-9 * (1.0 + w[1].abs()))
            });
            if untied && matches!(kind, RuleKind::FullKrum | RuleKind::MultiKrum) {
                prop_assert_eq!(mapped, a.selected_indices.clone(), "{}", kind);
            }
        }
    }

    /// With f = 2 Bulyan's last selection step scores by a single nearest
    /// neighbour, so mutual neighbours always tie; f = 3 avoids that.
    #[test]
    fn bulyan_is_permutation_invariant(u in vectors(15..=17, 3), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..u.len()).collect();
        Rng::new(seed).shuffle(&mut perm);
        let shuffled: Vec<UpdateVector> = perm.iter().map(|&i| u[i].clone()).collect();
        let a = rule(RuleKind::Bulyan, 3).aggregate(&u, &mut Rng::new(0)).unwrap();
        let b = rule(RuleKind::Bulyan, 3).aggregate(&shuffled, &mut Rng::new(0)).unwrap();
        for (x, y) in a.aggregate.iter().zip(b.aggregate.iter()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn coordinate_rules_stay_inside_the_box(u in vectors(1..=9, 3)) {
        for kind in [RuleKind::Mean, RuleKind::TrimmedMean, RuleKind::CoordMedian, RuleKind::Bulyan] {
            let a = rule(kind, 1).aggregate(&u, &mut Rng::new(0)).unwrap();
            for k in 0..3 {
                let lo = u.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min);
                let hi = u.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.aggregate[k] >= lo - 1e-12 && a.aggregate[k] <= hi + 1e-12, "{}", kind);
            }
        }
    }

    #[test]
    fn subspace_basis_is_orthonormal(rows in vectors(3..=30, 6), r in 1usize..6) {
        let cfg = SpectralKrumConfig { r, ..Default::default() };
        if let Some(model) = build_subspace(&rows, &cfg) {
            prop_assert!(model.tau >= 0.0);
            for a in &model.basis {
                for b in &model.basis {
                    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                    prop_assert!((dot - expect).abs() < 1e-8);
                }
            }
        }
    }

    /// Every guard survivor is under tau, or the fallback fired and kept
    /// exactly the smallest-residual members of the Krum set.
    #[test]
    fn guard_soundness(history in vectors(10..=20, 5), u in vectors(5..=10, 5), q in 0.3f64..1.0) {
        let cfg = SpectralKrumConfig { r: 2, q, ..Default::default() };
        let Some(model) = build_subspace(&history, &cfg) else { return Ok(()) };
        let sel = spectral_select(&u, &model, 1, None, 1, false);
        let under: Vec<bool> = sel.guard_kept.iter().map(|&i| sel.residuals[i] <= model.tau).collect();
        if sel.guard_fallback {
            prop_assert_eq!(sel.guard_kept.len(), 1);
            let best = sel.krum_selected.iter().map(|&i| sel.residuals[i]).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(sel.residuals[sel.guard_kept[0]], best);
            prop_assert!(sel.krum_selected.iter().all(|&i| sel.residuals[i] > model.tau));
        } else {
            prop_assert!(under.iter().all(|&x| x));
            let expect: Vec<usize> = sel.krum_selected.iter().copied().filter(|&i| sel.residuals[i] <= model.tau).collect();
            let mut got = sel.guard_kept.clone();
            got.sort_unstable();
            let mut want = expect;
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn raising_tau_never_shrinks_the_guard(u in vectors(5..=9, 4), t1 in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let mut low = identity_model(4, t1);
        low.basis.truncate(2);
        let mut high = low.clone();
        high.tau = t1 + extra;
        let a = spectral_select(&u, &low, 1, None, 1, false);
        let b = spectral_select(&u, &high, 1, None, 1, false);
        prop_assert_eq!(&a.krum_selected, &b.krum_selected);
        if !a.guard_fallback {
            prop_assert!(a.guard_kept.iter().all(|i| b.guard_kept.contains(i)));
        }
    }

    #[test]
    fn spectral_aggregate_is_mean_of_logged_survivors(u in vectors(6..=10, 3), history in vectors(8..=12, 3)) {
        let mut r = rule(RuleKind::SpectralKrum, 1);
        let mut rng = Rng::new(0);
        for h in history.chunks(1) {
            r.aggregate(h, &mut rng).unwrap();
        }
        let out = r.aggregate(&u, &mut rng).unwrap();
        let diag = out.diagnostics.spectral.unwrap();
        prop_assert!(!diag.guard_kept.is_empty());
        let expect = mean_of(&u, &diag.guard_kept);
        for (a, b) in out.aggregate.iter().zip(&expect) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn identity_basis_selects_like_multi_krum(u in vectors(6..=9, 4)) {
        let model = identity_model(4, f64::INFINITY);
        let sel = spectral_select(&u, &model, 1, None, 1, false);
        let mk = rule(RuleKind::MultiKrum, 1).aggregate(&u, &mut Rng::new(0)).unwrap();
        let mut s = sel.krum_selected.clone();
        s.sort_unstable();
        prop_assert_eq!(s, mk.selected_indices);
    }

    #[test]
    fn min_max_is_exact(mu in prop::collection::vec(-5.0f64..5.0, 6), sd in prop::collection::vec(0.0f64..2.0, 6), c in 0.0f64..4.0) {
        let out = min_max(&mu, &sd, c, 3);
        prop_assert_eq!(out.len(), 3);
        for v in &out {
            for k in 0..6 {
                prop_assert_eq!(v[k], mu[k] - c * sd[k]);
            }
        }
    }

    #[test]
    fn steered_updates_pass_the_guard(history in vectors(10..=20, 6), v in prop::collection::vec(-20.0f64..20.0, 6), cap in any::<bool>()) {
        let cfg = SpectralKrumConfig { r: 2, ..Default::default() };
        let Some(model) = build_subspace(&history, &cfg) else { return Ok(()) };
        let d = steer_direction(&v, &model, cap);
        prop_assert!(orthogonal_energy(&d, &model).unwrap() <= model.tau * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn dirichlet_partition_is_a_set_partition(
        labels in prop::collection::vec(0usize..5, 40..200),
        clients in 1usize..20,
        alpha in 0.05f64..10.0,
        seed in any::<u64>(),
    ) {
        let p = dirichlet_partition(&labels, clients, alpha, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(p.num_clients(), clients);
        let mut all: Vec<usize> = p.client_indices.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        prop_assert!(p.client_indices.iter().all(|c| !c.is_empty()));
    }
}
