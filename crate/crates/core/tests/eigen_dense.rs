//! Cross-checks the O(n) Perron iteration against a dense nonsymmetric
//! eigendecomposition of the very same cyclic tridiagonal matrix: the
//! dominant eigenvalue must be real and must match to tight absolute
//! tolerance at the same grid size.

use faer::Mat;
use frontspeed_core::eigen::{
    assemble, perron_fixed, principal_eigen_fixed, PeriodicCoefficient, PeriodicOperator, Stencil,
};
use frontspeed_core::periodicfield::{PeriodicField, TrigMode};

/// Eigenvalue of the stencil matrix with the largest real part, from the
/// dense QR eigensolver.
fn dense_dominant(st: &Stencil) -> (f64, f64) {
    let n = st.n;
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = st.diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = st.sup[i];
        }
        if i > 0 {
            m[(i, i - 1)] = st.sub[i];
        }
    }
    m[(0, n - 1)] = st.sub[0] * st.twist_up;
    m[(n - 1, 0)] = st.sup[n - 1] * st.twist_dn;
    let eig: Vec<faer::c64> = m.eigenvalues().unwrap();
    let best = eig.iter().cloned().reduce(|a, b| if a.re > b.re { a } else { b }).unwrap();
    (best.re, best.im)
}

#[test]
fn frozen_cosine_potential_n1024() {
    // a = 1, b = 0, c0(x) = 1 + cos(2πx), L = 1, n = 1024.
    // Expected value 1.0126616297044961 is the dominant eigenvalue of the
    // 1024-point discretization, computed beforehand by dense QR
    // eigendecomposition of the assembled matrix.
    let q = PeriodicField::trig(vec![TrigMode { k: 1, sin_amp: 0.0, cos_amp: 1.0 }], 1.0).unwrap();
    let op = PeriodicOperator::new(
        1.0,
        PeriodicCoefficient::constant(0.0),
        PeriodicCoefficient::new(1.0, q),
        1.0,
    )
    .unwrap();
    let r = principal_eigen_fixed(&op, 1024).unwrap();
    let expected = 1.012_661_629_704_496_1;
    assert!(
        (r.k - expected).abs() <= 1e-8 * (1.0 + expected.abs()),
        "k = {:.16e}, expected {expected:.16e}",
        r.k
    );
}

#[test]
fn dense_agreement_across_instances() {
    let sine = PeriodicField::sine(1.0, 1.0).unwrap();
    let bump = PeriodicField::sine_with_harmonics(1.0, &[0.4, 0.2], 2.0).unwrap();
    // (a, drift const, potential const, potential field scale, field, n)
    let cases: Vec<(f64, f64, f64, f64, &PeriodicField, usize)> = vec![
        (1.0, 0.0, 1.0, 1.0, &sine, 128),
        (1.0, 0.8, -0.5, 3.0, &sine, 256),
        (0.5, -1.2, 2.0, 1.5, &bump, 256),
        (2.0, 0.3, 0.0, 5.0, &bump, 128),
    ];
    for (a, b, c_const, scale, field, n) in cases {
        let op = PeriodicOperator::new(
            a,
            PeriodicCoefficient::constant(b),
            PeriodicCoefficient::new(c_const, field.scale(scale)),
            field.period(),
        )
        .unwrap();
        let st = assemble(&op, n, 0.0);
        let (re, im) = dense_dominant(&st);
        assert!(im.abs() <= 1e-8 * (1.0 + re.abs()), "dominant eigenvalue not real: {re} + {im}i");
        let r = principal_eigen_fixed(&op, n).unwrap();
        assert!(
            (r.k - re).abs() <= 1e-8 * (1.0 + re.abs()),
            "perron {:.12e} vs dense {:.12e} (n = {n})",
            r.k,
            re
        );
        assert!(r.psi.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn dense_agreement_twisted() {
    // Floquet-twisted wrap entries keep the matrix entrywise nonnegative off
    // the diagonal, so the Perron iteration applies unchanged.
    let sine = PeriodicField::sine(2.0, 1.0).unwrap();
    let op = PeriodicOperator::new(
        1.0,
        PeriodicCoefficient::constant(0.0),
        PeriodicCoefficient::new(1.0, sine),
        1.0,
    )
    .unwrap();
    let st = assemble(&op, 256, 0.8);
    let (re, im) = dense_dominant(&st);
    assert!(im.abs() <= 1e-8 * (1.0 + re.abs()));
    let (k, psi, _) = perron_fixed(&st).unwrap();
    assert!((k - re).abs() <= 1e-8 * (1.0 + re.abs()), "perron {k:.12e} vs dense {re:.12e}");
    assert!(psi.iter().all(|&p| p > 0.0));
}
