use hdcce::simulate::{default_beta, reconstruction_error};
use hdcce::{mean_loading_matrix, simulate_panel, HdcceError, SimulationConfig};
use nalgebra::DMatrix;

#[test]
fn mean_loading_block_pattern_d2() {
    let g = mean_loading_matrix(2);
    assert_eq!(g.shape(), (9, 3));
    for k in 0..3 {
        assert_eq!(g[(k, k)], 0.5);
        for r in 0..2 {
            let row = 3 + 2 * k + r;
            for c in 0..3 {
                assert_eq!(g[(row, c)], if c == k { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn scenario_a_smallest_setting_has_fifteen_regressors() {
    let cfg = SimulationConfig::new(50, 50, 4, 3).with_rho(0.25);
    let (panel, truth) = simulate_panel(&cfg).unwrap();
    assert_eq!((panel.n, panel.t, panel.p), (50, 50, 15));
    assert_eq!(truth.factors.shape(), (50, 3));
    assert_eq!(truth.gamma.shape(), (50, 3));
    assert_eq!(truth.loadings[0].shape(), (15, 3));
    assert!(reconstruction_error(&panel, &truth, &default_beta(15)) < 1e-12);
}

#[test]
fn same_seed_same_panel_other_seed_differs() {
    let cfg = SimulationConfig::new(6, 5, 1, 11);
    let (a, _) = simulate_panel(&cfg).unwrap();
    let (b, _) = simulate_panel(&cfg).unwrap();
    assert_eq!(a, b);
    let (c, _) = simulate_panel(&SimulationConfig::new(6, 5, 1, 12)).unwrap();
    assert_ne!(a.y, c.y);
}

#[test]
fn custom_beta_enters_the_response() {
    let beta = vec![2.0, 0.0, -1.0, 0.5, 0.0, 0.0];
    let cfg = SimulationConfig::new(4, 7, 1, 5).with_beta(beta.clone());
    let (panel, truth) = simulate_panel(&cfg).unwrap();
    assert!(reconstruction_error(&panel, &truth, &beta) < 1e-12);
    assert!(reconstruction_error(&panel, &truth, &default_beta(6)) > 1e-3);
}

#[test]
fn invalid_configurations_rejected() {
    let cfg = SimulationConfig::new(5, 5, 0, 1).with_rho(1.0);
    assert!(matches!(simulate_panel(&cfg), Err(HdcceError::NotPositiveDefinite { .. })));
    // m = 12 for d = 0, so the lower bound is -1/11.
    let cfg = SimulationConfig::new(5, 5, 0, 1).with_rho(-0.1);
    assert!(matches!(simulate_panel(&cfg), Err(HdcceError::NotPositiveDefinite { dim: 12, .. })));
    assert!(simulate_panel(&SimulationConfig::new(5, 5, 0, 1).with_rho(-0.09)).is_ok());
    let mut cfg = SimulationConfig::new(5, 5, 0, 1);
    cfg.k = 2;
    assert!(matches!(simulate_panel(&cfg), Err(HdcceError::InvalidConfig(_))));
    let cfg = SimulationConfig::new(5, 5, 0, 1).with_beta(vec![1.0]);
    assert!(matches!(simulate_panel(&cfg), Err(HdcceError::InvalidConfig(_))));
    assert!(simulate_panel(&SimulationConfig::new(0, 5, 0, 1)).is_err());
}

#[test]
fn config_json_uses_upper_case_dimension_names() {
    let cfg: SimulationConfig = serde_json::from_str(r#"{"n": 3, "T": 4, "d": 1, "seed": 9}"#).unwrap();
    assert_eq!(cfg, SimulationConfig::new(3, 4, 1, 9));
    let back = serde_json::to_value(&cfg).unwrap();
    assert_eq!(back["T"], 4);
    assert_eq!(back["K"], 3);
}

/// Large panel shared by the moment checks below.
fn large() -> (hdcce::PanelDataset, hdcce::FactorStructure) {
    simulate_panel(&SimulationConfig::new(2000, 500, 1, 2024)).unwrap()
}

#[test]
fn factor_variance_is_stationary() {
    // One AR(1) path of length 500 gives a sample variance with sd near 0.08,
    // so the band is applied to the average over independent seeds. Factors
    // come from their own stream, so n does not change them.
    let seeds = 2024..2032u64;
    let mut total = 0.0;
    let mut count = 0.0;
    for seed in seeds {
        let (_, truth) = simulate_panel(&SimulationConfig::new(2, 500, 0, seed)).unwrap();
        for k in 0..3 {
            let col = truth.factors.column(k);
            let m = col.mean();
            total += col.iter().map(|f| (f - m) * (f - m)).sum::<f64>() / (col.len() - 1) as f64;
            count += 1.0;
        }
    }
    let v = total / count;
    assert!((0.93..=1.07).contains(&v), "pooled Var(F) = {v}");
}

#[test]
fn factors_do_not_depend_on_unit_count() {
    let (_, a) = simulate_panel(&SimulationConfig::new(2, 40, 0, 5)).unwrap();
    let (_, b) = simulate_panel(&SimulationConfig::new(30, 40, 2, 5)).unwrap();
    assert_eq!(a.factors, b.factors);
}

#[test]
fn regressor_second_moments() {
    // Per-regressor second moment: the loading row of regressor j has mean
    // μ_j, unit-variance entries on its random positions, and Z_j adds its
    // variance. With E[F²] = 1 that gives 0.25 + 3 + 1 = 4.25 for j = 1..3
    // and 1 + 1 + 1.5 = 3.5 for the group regressors. All units share one
    // factor path, so the moment is pooled over seeds.
    let seeds = 100..116u64;
    let mut m2 = vec![0.0; 6];
    for seed in seeds.clone() {
        let (panel, _) = simulate_panel(&SimulationConfig::new(500, 500, 1, seed)).unwrap();
        let cells = (panel.n * panel.t) as f64;
        for (j, m) in m2.iter_mut().enumerate() {
            *m += panel.x.iter().map(|x| x.column(j).norm_squared()).sum::<f64>() / cells;
        }
    }
    for (j, m) in m2.iter().enumerate() {
        let m = m / seeds.clone().count() as f64;
        let band = if j < 3 { 4.1..=4.4 } else { 3.35..=3.65 };
        assert!(band.contains(&m), "E[X²] for j = {} is {m}", j + 1);
    }
}

#[test]
fn regressor_moments_given_factors_and_loadings() {
    let (panel, truth) = large();
    let cells = (panel.n * panel.t) as f64;
    for j in 0..panel.p {
        let mut common = 0.0;
        for (i, x) in panel.x.iter().enumerate() {
            let signal = &truth.factors * truth.loadings[i].row(j).transpose();
            common += signal.norm_squared();
            assert_eq!(x.nrows(), signal.len());
        }
        let z_var = if j < 3 { 1.0 } else { 1.5 };
        let expected = common / cells + z_var;
        let s: f64 = panel.x.iter().map(|x| x.column(j).norm_squared()).sum();
        let got = s / cells;
        assert!((got - expected).abs() < 0.01 * expected, "j = {}: {got} vs {expected}", j + 1);
    }
}

#[test]
fn loading_entries_equicorrelated() {
    let (_, truth) = large();
    let n = truth.gamma.nrows();
    // Three distinct positions of G_i: γ_i1, Γ_i[1,1], Γ_i[4,1].
    let draws = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => truth.gamma[(i, 0)],
        1 => truth.loadings[i][(0, 0)],
        _ => truth.loadings[i][(3, 0)],
    });
    let means: Vec<f64> = (0..3).map(|c| draws.column(c).mean()).collect();
    assert!((means[0] - 1.0).abs() < 0.06);
    assert!((means[1] - 0.5).abs() < 0.06);
    assert!((means[2] - 1.0).abs() < 0.06);
    let centred = DMatrix::from_fn(n, 3, |i, c| draws[(i, c)] - means[c]);
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    for a in 0..3 {
        assert!((cov[(a, a)] - 1.0).abs() < 0.1, "variance {}", cov[(a, a)]);
        for b in 0..a {
            let r = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
            assert!((r - 0.25).abs() < 0.08, "correlation {r}");
        }
    }
}
