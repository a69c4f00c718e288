mod common;

use common::*;
use kgfield::model::*;
use kgfield::radial;
use kgfield::spectral::GridSpec;

#[test]
fn profile_transform_converges_under_grid_refinement() {
    // Truncation at 13 widths keeps the cutoff's spectral tail below the
    // coarse Nyquist; see the decisions ledger for the R = 1 case.
    let spec = ProfileSpec::gaussian(0.5, 0.3, 3.9);
    let g64 = GridSpec::new(16.0, 64).unwrap();
    let g128 = GridSpec::new(16.0, 128).unwrap();
    let coarse = build_profile(&spec, g64).unwrap();
    let fine = build_profile(&spec, g128).unwrap();
    let mut worst = 0.0f64;
    for idx in 0..g64.spectral_len() {
        let j = g64.mode(idx);
        if j.iter().map(|v| v * v).sum::<i64>() > 16 * 16 {
            continue;
        }
        let (i2, conj) = g128.spectral_index(j);
        let b = if conj { fine.hat[i2].conj() } else { fine.hat[i2] };
        worst = worst.max((coarse.hat[idx] - b).norm() / b.norm());
    }
    assert!(worst < 1e-6, "worst relative difference {worst:e}");
}

#[test]
fn lattice_coupling_constant_matches_radial_quadrature() {
    let spec = ProfileSpec::gaussian(0.5, 0.3, 1.0);
    let m = model(&config(&[0.0], 1.0, spec, 16.0, 64));
    let k = coupling_matrix(&m, 0.0).unwrap();
    let oracle = radial::coupling_constant(&spec, 0.0, 0.0).unwrap();
    assert!(((k[0][0] - oracle) / oracle).abs() < 1e-2, "{} vs {oracle}", k[0][0]);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert!(k[i][j].abs() < 1e-10 * k[0][0]);
            }
        }
    }
}

#[test]
fn bspline_bump_violates_a3_but_gaussian_does_not() {
    let bump = ProfileSpec {
        amplitude: 0.5,
        support_radius: 1.0,
        shape: ProfileShape::BsplineBump,
    };
    let report = check_conditions(&model(&config(&[0.0], 1.0, bump, 16.0, 64)));
    assert!(!report.a3_holds, "{report:?}");
    let gauss = ProfileSpec::gaussian(0.5, 0.3, 1.0);
    let report = check_conditions(&model(&config(&[0.0], 1.0, gauss, 16.0, 64)));
    assert!(report.a3_holds, "{report:?}");
}

#[test]
fn massive_shift_lowers_a1_margin() {
    let spec = ProfileSpec::gaussian(0.5, 0.3, 1.0);
    let report = check_conditions(&model(&config(&[1.0, 1.0], 2.0, spec, 8.0, 16)));
    assert_eq!(report.m_star, 1.0);
    // K(m_*²) ≥ K₀ entrywise on the diagonal, and A1 subtracts m_*² as well.
    assert!(report.k[0][0] > report.k0[0][0]);
    assert!(report.eig_a1[0] < report.eig_a1p[0]);
    assert!(report.all_hold());
}

#[test]
fn single_precision_model() {
    let cfg = config(&[1.0], 1.0, ProfileSpec::gaussian(0.5, 0.5, 1.5), 8.0, 16);
    let m32 = kgfield::model::DiscreteModel::<f32>::new(&cfg).unwrap();
    let m64 = model(&cfg);
    let k32 = coupling_matrix(&m32, 0.0).unwrap();
    let k64 = coupling_matrix(&m64, 0.0).unwrap();
    assert!(((k32[0][0] as f64 - k64[0][0]) / k64[0][0]).abs() < 1e-5);
}
