use rcohull::hulls::{twopoint_delta_family, twopoint_predicate};
use rcohull::laminate::{check_hi, CertificateBudget, LaminateChain, OpenSet};
use rcohull::pam::{Affine, Domain, PiecewiseAffineMap};
use rcohull::solver::{
    estimate_c, oscillate, realize_laminate, relaxation_step, solve, OscillationSpec, RefinementConfig, RelaxReport, SolveError,
    WalkerDecomposer,
};
use rcohull::tol::REL_TOL;
use rcohull::walker::FiberProposer;
use rcohull::{DetConstraint, Matrix, MatrixSetSpec, TargetSet};

const A1: f64 = 1.0;
const A2: f64 = 3.0;
const B1: f64 = 2.0;
const B2: f64 = 4.0;

fn wells() -> TargetSet {
    TargetSet::from(MatrixSetSpec::points(2, &[&[A1, A2], &[B1, B2]], DetConstraint::Positive).unwrap())
}

fn interior() -> OpenSet {
    twopoint_predicate(A1, A2, B1, B2, true).unwrap().open_set().unwrap()
}

fn family(d: f64) -> Result<TargetSet, SolveError> {
    twopoint_delta_family(A1, A2, B1, B2, d).map(|f| f.e.into()).map_err(|_| SolveError::Precondition("delta"))
}

fn relax(xi: &Matrix, eps: f64, c: f64) -> Result<RelaxReport, SolveError> {
    let delta = eps / 2.0;
    let mut prop = FiberProposer::new(&[[A1 + delta, A2], [B1, B2 - delta]]);
    let mut dec =
        WalkerDecomposer { family: Some(&family), e: wells(), int_k: interior(), proposer: &mut prop, budget: CertificateBudget::default() };
    relaxation_step(xi, delta, &wells(), &interior(), &Domain::unit_square(1), eps, c, &mut dec)
}

#[test]
fn three_atom_realization() {
    let chain = LaminateChain::new(vec![
        (0.25, Matrix::diag(&[1.0, 1.0])),
        (0.25, Matrix::diag(&[1.0, -1.0])),
        (0.5, Matrix::diag(&[-1.0, 0.0])),
    ])
    .unwrap();
    let u = OpenSet::ball(Matrix::zeros(2), 3.0);
    let w = check_hi(&chain, &u, REL_TOL).unwrap();
    let xi = chain.barycenter();
    let phi = Affine::linear(xi);
    for eps in [0.8, 0.4] {
        let r = realize_laminate(&chain, &w, &u, &Domain::unit_square(1), [0.0; 2], eps).unwrap();
        assert!(r.map.check_boundary(&phi), "eps {eps}: boundary data lost");
        assert!(r.map.sup_norm_diff_affine(&phi) <= eps);
        let mut total = 0.0;
        for (i, atom) in chain.atoms().iter().enumerate() {
            let m = r.map.measure_of(&r.omega[i]);
            assert!((m - atom.weight).abs() <= eps, "eps {eps}: atom {i} has measure {m}");
            assert!(r.omega[i].iter().all(|&c| *r.map.gradient(c) == atom.matrix));
            total += m;
        }
        assert!(total >= 1.0 - 3.0 * eps);
        assert!((total + r.map.measure_of(&r.aux) - 1.0).abs() < 1e-9);
        for p in r.map.pieces() {
            assert!(u.contains(&p.gradient) || (p.gradient - xi).norm() < eps);
        }
    }
}

#[test]
fn small_realization_is_continuous() {
    let chain = LaminateChain::new(vec![(0.5, Matrix::diag(&[1.0, 0.0])), (0.5, Matrix::diag(&[-1.0, 0.0]))]).unwrap();
    let u = OpenSet::ball(Matrix::zeros(2), 2.0);
    let w = check_hi(&chain, &u, REL_TOL).unwrap();
    let r = realize_laminate(&chain, &w, &u, &Domain::unit_square(1), [0.5, -0.5], 0.5).unwrap();
    assert!(r.map.is_continuous());
    assert!(r.map.check_boundary(&Affine::new(Matrix::zeros(2), [0.5, -0.5])));
}

#[test]
fn oscillation_bad_set_halves_with_eps() {
    let a = Matrix::diag(&[1.0, 0.0]);
    let mut prev: Option<f64> = None;
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let spec = OscillationSpec::new(a, -a, 0.5, eps, [0.0; 2]).unwrap();
        let o = oscillate(&spec, &Domain::unit_square(1)).unwrap();
        let bad = o.map.measure_of(&o.aux);
        assert!(bad <= eps);
        if let Some(p) = prev {
            assert!(bad <= 0.55 * p, "eps {eps}: {bad} after {p}");
        }
        prev = Some(bad);
    }
}

#[test]
fn relaxation_at_a_well_is_exact() {
    let xi = Matrix::diag(&[B1, B2]);
    let r = relax(&xi, 0.1, 1.0).unwrap();
    assert_eq!(r.dist_integral, 0.0);
    assert_eq!(r.map.len(), Domain::unit_square(1).len());
    assert_eq!(r.sup_diff, 0.0);
}

#[test]
fn relaxation_decays_with_eps() {
    let (c, _) = estimate_c(&wells(), &interior(), 2, 2000, 7).unwrap();
    let x2 = 2.25;
    let mut prev: Option<f64> = None;
    for k in 0..4 {
        let eps = 0.2 * 0.5f64.powi(k);
        // ξ sits on the fiber of the inner well of E_δ
        let xi = Matrix::diag(&[(A1 + eps / 2.0) * A2 / x2, x2]);
        assert!(interior().contains(&xi));
        let r = relax(&xi, eps, c).unwrap();
        assert!(r.dist_integral <= r.bound, "eps {eps}: {} > {}", r.dist_integral, r.bound);
        assert_eq!(r.outside_k, 0);
        assert!(r.sup_diff <= eps);
        assert!(r.map.check_boundary(&Affine::linear(xi)));
        if let Some(p) = prev {
            assert!(r.dist_integral <= 0.6 * p, "eps {eps}: {} after {p}", r.dist_integral);
        }
        prev = Some(r.dist_integral);
    }
}

#[test]
fn solve_returns_data_already_in_e() {
    let a = Matrix::diag(&[A1, A2]);
    let dom = Domain::unit_square(2);
    let maps: Vec<Affine> = (0..dom.len()).map(|_| Affine::new(a, [0.25, -1.0])).collect();
    let phi = PiecewiseAffineMap::new(dom, maps).unwrap();
    let mut prop = FiberProposer::new(&[[A1, A2], [B1, B2]]);
    let mut dec =
        WalkerDecomposer { family: Some(&family), e: wells(), int_k: interior(), proposer: &mut prop, budget: CertificateBudget::default() };
    let (out, report) = solve(&phi, &wells(), &interior(), &mut dec, &RefinementConfig::default()).unwrap();
    assert!(report.converged);
    assert_eq!(report.initial, 0.0);
    assert!(report.rounds.is_empty());
    assert_eq!(out.len(), phi.len());
    assert_eq!(out.sup_norm_diff(&phi).unwrap(), 0.0);
    assert_eq!(out.dist_integral(&wells()).unwrap(), 0.0);
}
