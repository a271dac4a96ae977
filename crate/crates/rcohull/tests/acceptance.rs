//! Acceptance run: one pass/fail line per criterion.

#[path = "support/kirchheim.rs"]
mod kirchheim;

use std::time::Instant;

use rcohull::hulls::{
    fiber_rco_predicate, ftheta_predicate, rco_oracle, sample_accepted, segment_delta_family_2d, segment_k_predicate_2d, segment_k_predicate_3d,
    theta_underline, twopoint_delta_family, twopoint_predicate, HullPredicate, LatticeSet,
};
use rcohull::laminate::{check_hi, CertificateBudget, LaminateChain, OpenSet};
use rcohull::matcore::singular_values;
use rcohull::pam::{Affine, Domain, PiecewiseAffineMap};
use rcohull::rng;
use rcohull::sets::{DetConstraint, MatrixSetSpec, SingularValueSet, TargetSet};
use rcohull::solver::{estimate_c, oscillate, relaxation_step, solve, OscillationSpec, RefinementConfig, SolveError, WalkerDecomposer};
use rcohull::tol::REL_TOL;
use rcohull::walker::{path_to_chain, refine_chain, validate_kirchheim_input, walk, FiberProposer, GenericProposer, KirchheimInput, RefineCaps, WalkCaps};
use rcohull::Matrix;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn singular_value_identities() -> Outcome {
    let mut r = rng::seeded(1);
    let clock = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let m = rng::uniform_matrix(&mut r, 2, -5.0, 5.0);
        let sv = singular_values(&m);
        // both sides are quadratic in m, so |m|² sets the scale
        let scale = m.norm_sq().max(f64::MIN_POSITIVE);
        worst.0 = worst.0.max((sv.product() - m.det().abs()).abs() / scale);
        worst.1 = worst.1.max((sv.sum_sq() - m.norm_sq()).abs() / scale);
    }
    let secs = clock.elapsed().as_secs_f64();
    check(worst.0 <= 1e-9 && worst.1 <= 1e-9 && secs < 1.0, format!("product err={:.1e} sum-of-squares err={:.1e} {secs:.3}s", worst.0, worst.1))
}

fn theta_ordering() -> Outcome {
    let (a1, a2, b1, b2) = (1.0, 3.0, 2.0, 4.0);
    let p = twopoint_predicate(a1, a2, b1, b2, true).map_err(|e| e.to_string())?;
    let theta = p.theta_underline().ok_or("no theta")?;
    check(theta == 2.5 && theta_underline(a1, a2, b1, b2) == 2.5 && b1 < theta && theta < a2, format!("theta={theta}"))
}

fn oracle_sandwich() -> Outcome {
    let clock = Instant::now();
    let lambda = SingularValueSet::FinitePoints(vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
    let spec = MatrixSetSpec::new(2, lambda.clone(), DetConstraint::None).map_err(|e| e.to_string())?;
    let lattice = LatticeSet::from_spec(&spec, 0.25, 4.0).map_err(|e| e.to_string())?;
    let hull = rco_oracle(&lattice, 1000);
    let closure = ftheta_predicate(&lambda, false).map_err(|e| e.to_string())?;
    let mut bad = 0;
    for m in hull.matrices() {
        if !closure.accepts(&m).map_err(|e| e.to_string())? {
            bad += 1;
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let msg = format!("|E_h|={} |oracle|={} converged={} violations={bad} {secs:.1}s", lattice.len(), hull.len(), hull.converged(), );
    check(bad == 0 && hull.len() > lattice.len() && secs < 60.0, msg)
}

fn delta_inclusion() -> Outcome {
    let (a1, a2, b1, b2) = (1.0, 3.0, 2.0, 4.0);
    let accepted: Vec<bool> = [0.2, 0.5, 0.9, 1.0, 1.2].iter().map(|&d| twopoint_delta_family(a1, a2, b1, b2, d).is_ok()).collect();
    let family = twopoint_delta_family(a1, a2, b1, b2, 0.2).map_err(|e| e.to_string())?;
    let strict = twopoint_predicate(a1, a2, b1, b2, true).map_err(|e| e.to_string())?;
    let members = sample_accepted(&family.k, 0.5, 4.5, 1000, 3, 1_000_000);
    let mut bad = 0;
    for m in &members {
        if !strict.accepts(m).map_err(|e| e.to_string())? {
            bad += 1;
        }
    }
    let msg = format!("accepts {accepted:?} for [0.2, 0.5, 0.9, 1.0, 1.2]; {} K_delta samples, {bad} outside int K", members.len());
    check(accepted == [true, true, true, false, false] && members.len() == 1000 && bad == 0, msg)
}

fn laminate_machinery() -> Outcome {
    let (a1, a2, b1, b2) = (1.0, 3.0, 2.0, 4.0);
    let strict = twopoint_predicate(a1, a2, b1, b2, true).map_err(|e| e.to_string())?;
    let int_k = strict.open_set().ok_or("no open set")?;
    // starts on the fiber det = (a1 + δ) a2 of the inner family, walked into
    // its two wells
    let inner = twopoint_delta_family(a1, a2, b1, b2, 0.2).map_err(|e| e.to_string())?;
    let wells = [[a1 + 0.2, a2], [b1, b2 - 0.2]];
    let target = TargetSet::from(inner.e.clone());
    let mut r = rng::seeded(5);
    let mut starts = Vec::new();
    while starts.len() < 400 {
        let x1: f64 = a1 + 0.2 + (b1 - a1 - 0.2) * rand_unit(&mut r);
        let xi = rng::rotation(&mut r, 2) * Matrix::diag(&[x1, (a1 + 0.2) * a2 / x1]) * rng::rotation(&mut r, 2);
        if int_k.contains(&xi) {
            starts.push(xi);
        }
    }
    let delta = 0.05;
    let caps = WalkCaps::default();
    let mut walks = 0;
    let mut worst_bary = 0.0f64;
    let mut hi_fail = 0;
    let mut longest = 0;
    for xi in &starts {
        if walks == 100 {
            break;
        }
        let mut prop = FiberProposer::new(&wells);
        let Ok(path) = walk(xi, &int_k, &target, delta, &mut prop, &caps) else { continue };
        walks += 1;
        longest = longest.max(path.len());
        let chain = path_to_chain(&path);
        worst_bary = worst_bary.max((chain.barycenter() - *xi).max_abs());
        if check_hi(&chain, &int_k, REL_TOL).is_err() {
            hi_fail += 1;
        }
    }
    // decay of the outside mass, sweep by sweep, from a spread-out chain
    let start = LaminateChain::new(starts.iter().take(8).map(|m| (0.125, *m)).collect()).map_err(|e| e.to_string())?;
    let mut prop = FiberProposer::new(&wells);
    let rep = refine_chain(&start, &target, &int_k, delta, &mut prop, &RefineCaps::default()).map_err(|e| e.to_string())?;
    let mut decay_ok = rep.masses.len() > 1;
    let mut ratios = Vec::new();
    for (k, l) in rep.walk_lengths.iter().enumerate() {
        let (before, after) = (rep.masses[k], rep.masses[k + 1]);
        ratios.push(format!("{:.3}(L={l})", after / before));
        decay_ok &= after <= (1.0 - 0.5f64.powi(*l as i32)) * before + 1e-15;
    }
    let msg = format!(
        "{walks} walks (longest {longest}) barycenter err={worst_bary:.1e} check_HI failures={hi_fail}; refine ratios [{}] stuck={}",
        ratios.join(", "),
        rep.stuck
    );
    check(walks == 100 && worst_bary <= 1e-12 && hi_fail == 0 && decay_ok, msg)
}

fn rand_unit(r: &mut rng::SeededRng) -> f64 {
    use rand::Rng;
    r.random_range(0.0..1.0)
}

fn oscillation_contract() -> Outcome {
    let a = Matrix::diag(&[1.0, 0.0]);
    let b = -a;
    let mut notes = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let clock = Instant::now();
        let spec = OscillationSpec::new(a, b, 0.5, eps, [0.0; 2]).map_err(|e| e.to_string())?;
        let o = oscillate(&spec, &Domain::unit_square(1)).map_err(|e| e.to_string())?;
        let u = &o.map;
        let secs = clock.elapsed().as_secs_f64();
        let sup = u.sup_norm_diff_affine(&spec.phi);
        let ma = u.measure_of(&o.omega_a);
        let mb = u.measure_of(&o.omega_b);
        // frame gradients are a ⊗ b_i with |a ⊗ b_i| = eps
        let finite_set = u.pieces().iter().all(|p| p.gradient == a || p.gradient == b || (p.gradient.norm() - eps).abs() <= 1e-12);
        let ok = u.check_boundary(&spec.phi)
            && u.is_continuous()
            && sup <= eps
            && (ma - 0.5).abs() <= eps
            && (mb - 0.5).abs() <= eps
            && finite_set
            && secs < 5.0;
        notes.push(format!("eps={eps}: sup={sup:.3e} |A|={ma:.4} |B|={mb:.4} cells={} {secs:.2}s", u.len()));
        if !ok {
            return Err(notes.join("; "));
        }
    }
    Ok(notes.join("; "))
}

fn relaxation_estimate() -> Outcome {
    let (a1, a2, b1, b2) = (1.0, 3.0, 2.0, 4.0);
    let eps = 0.05;
    let delta = eps / 2.0;
    let e = TargetSet::from(MatrixSetSpec::points(2, &[&[a1, a2], &[b1, b2]], DetConstraint::Positive).map_err(|e| e.to_string())?);
    let int_k = twopoint_predicate(a1, a2, b1, b2, true).map_err(|e| e.to_string())?.open_set().ok_or("no open set")?;
    // strictly interior, on the fiber det = (a1 + δ) a2 of the inner family
    let x2 = 2.25;
    let x1 = (a1 + delta) * a2 / x2;
    let r = Matrix::new2([[0.6, -0.8], [0.8, 0.6]]);
    let s = Matrix::new2([[0.28, 0.96], [-0.96, 0.28]]);
    let xi = r * Matrix::diag(&[x1, x2]) * s;
    if !int_k.contains(&xi) {
        return Err("xi is not interior".into());
    }
    let family = twopoint_delta_family(a1, a2, b1, b2, delta).map_err(|e| e.to_string())?;
    if !family.k.accepts(&xi).map_err(|e| e.to_string())? {
        return Err("xi is not in K_delta".into());
    }
    let clock = Instant::now();
    let (c, accepted) = estimate_c(&e, &int_k, 2, 10_000, 7).map_err(|e| e.to_string())?;
    let fam = |d: f64| -> Result<TargetSet, SolveError> {
        twopoint_delta_family(a1, a2, b1, b2, d).map(|f| f.e.into()).map_err(|_| SolveError::Precondition("delta out of range"))
    };
    let mut prop = FiberProposer::new(&[[a1 + delta, a2], [b1, b2 - delta]]);
    let mut dec = WalkerDecomposer { family: Some(&fam), e: e.clone(), int_k: int_k.clone(), proposer: &mut prop, budget: CertificateBudget::default() };
    let rep = relaxation_step(&xi, delta, &e, &int_k, &Domain::unit_square(1), eps, c, &mut dec).map_err(|e| e.to_string())?;
    let bound = eps * 1.0 + 3.0 * c * eps;
    let phi = Affine::linear(xi);
    let msg = format!(
        "dist_integral={:.4e} bound={bound:.4e} c={c:.3} ({accepted} samples) atoms={} cells={} outside_intK={} sup={:.2e} {:.1}s",
        rep.dist_integral,
        rep.chain.len(),
        rep.map.len(),
        rep.outside_k,
        rep.sup_diff,
        clock.elapsed().as_secs_f64()
    );
    check(rep.dist_integral <= bound && rep.outside_k == 0 && rep.map.check_boundary(&phi) && rep.sup_diff <= eps, msg)
}

fn end_to_end() -> Outcome {
    let a = Matrix::diag(&[1.0, 1.0]);
    let b = Matrix::diag(&[1.0, -1.0]);
    let e = TargetSet::Finite(vec![a, b]);
    let tube = 0.5;
    let int_k = OpenSet::new(3.0, move |m| {
        let t = ((m.get(1, 1) + 1.0) / 2.0).clamp(0.0, 1.0);
        tube - (*m - (b + (a - b).scale(t))).norm()
    });
    let bound_k = a.norm() + tube;
    let phi = Affine::linear((a + b).scale(0.5));
    let start = PiecewiseAffineMap::affine(Domain::unit_square(1), phi).map_err(|e| e.to_string())?;
    let mut prop = GenericProposer::new(2, 3);
    let mut dec = WalkerDecomposer { family: None, e: e.clone(), int_k: int_k.clone(), proposer: &mut prop, budget: CertificateBudget::default() };
    let clock = Instant::now();
    let (u, rep) = solve(&start, &e, &int_k, &mut dec, &RefinementConfig::default()).map_err(|e| e.to_string())?;
    let secs = clock.elapsed().as_secs_f64();
    let log: Vec<String> = rep.rounds.iter().map(|r| format!("{:.2e}/{}", r.dist_integral, r.cells)).collect();
    let sup_grad = rep.rounds.iter().map(|r| r.sup_grad).fold(0.0, f64::max);
    let msg = format!("rounds={} [{}] sup_grad={sup_grad:.3} bound={bound_k:.3} {secs:.1}s", rep.rounds.len(), log.join(", "));
    check(rep.converged && rep.rounds.len() <= 8 && sup_grad <= bound_k && u.check_boundary(&phi) && secs < 60.0, msg)
}

fn invariance() -> Outcome {
    let (a1, a2, b1, b2) = (1.0, 3.0, 2.0, 4.0);
    let e = |x: Result<HullPredicate, rcohull::hulls::HullError>| x.map_err(|e| e.to_string());
    let lambda = SingularValueSet::FinitePoints(vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
    let oracle = LatticeSet::from_spec(&MatrixSetSpec::new(2, lambda.clone(), DetConstraint::None).map_err(|e| e.to_string())?, 0.25, 4.0)
        .map_err(|e| e.to_string())?
        .predicate();
    let predicates: Vec<(&str, HullPredicate)> = vec![
        ("ftheta", e(ftheta_predicate(&lambda, false))?),
        ("ftheta strict", e(ftheta_predicate(&lambda, true))?),
        ("twopoint", e(twopoint_predicate(a1, a2, b1, b2, false))?),
        ("twopoint strict", e(twopoint_predicate(a1, a2, b1, b2, true))?),
        ("twopoint K_delta", twopoint_delta_family(a1, a2, b1, b2, 0.3).map_err(|e| e.to_string())?.k),
        ("fiber", e(fiber_rco_predicate(1.0, 2.0, false))?),
        ("segment 2d", e(segment_k_predicate_2d([1.0, 2.0], [2.0, 4.0]))?),
        ("segment 2d K_delta", segment_delta_family_2d([1.0, 2.0], [2.0, 4.0], 0.1).map_err(|e| e.to_string())?.k),
        ("segment 3d", e(segment_k_predicate_3d([1.0, 2.0, 3.0], [2.0, 3.0, 5.0]))?),
        ("oracle", oracle),
    ];
    let mut r = rng::seeded(9);
    let mut checked = 0;
    let mut skipped = 0;
    let mut bad = Vec::new();
    for (name, p) in &predicates {
        let n = p.n();
        // accepted points are rare under uniform draws, so mix in members
        let mut points = sample_accepted(p, 0.0, 5.0, 50, 13, 200_000);
        while points.len() < 100 {
            points.push(rng::uniform_matrix(&mut r, n, -4.0, 4.0));
        }
        for xi in points {
            let v = p.evaluate(&xi).map_err(|e| e.to_string())?;
            let (rr, ss) = (rng::rotation(&mut r, n), rng::rotation(&mut r, n));
            let w = p.evaluate(&(rr * xi * ss)).map_err(|e| e.to_string())?;
            // verdicts on the boundary itself may flip in the last bits
            if v.margin.abs() <= 1e-9 * (1.0 + xi.norm_sq()) {
                skipped += 1;
                continue;
            }
            checked += 1;
            if v.accepted != w.accepted {
                bad.push(format!("{name}: {xi:?}"));
            }
        }
    }
    check(bad.is_empty(), format!("{} predicates, {checked} conjugations, {skipped} near-boundary skipped, violations={}", predicates.len(), bad.len()))
}

fn kirchheim_validation() -> Outcome {
    let seeds = kirchheim::parse_seeds(include_str!("data/kirchheim_seeds.txt"));
    let good = kirchheim::assemble(&seeds);
    let clock = Instant::now();
    let report = validate_kirchheim_input(&good, 10_000, 21, 1e-9);
    let secs = clock.elapsed().as_secs_f64();
    let mut notes = vec![format!("consistent: {} hulls, {}/{} covered, labels {:?} {secs:.1}s", good.e.len(), report.covered, report.sampled, report.labels())];
    let mut ok = report.ok();

    // i: one vertex pushed off its rank-one line
    let mut bad_i = good.clone();
    bad_i.m[0][0] += Matrix::identity(2).scale(1e-3);
    // ii: one vertex moved along its rank-one line to outside the ball
    let mut bad_ii = good.clone();
    let (xi, mu) = (bad_ii.e[0], bad_ii.m[0][0]);
    let d = (mu - xi).scale(1.0 / (mu - xi).norm());
    let b = xi.dot(&d);
    let t = -b + (b * b - (xi.norm_sq() - 0.51 * 0.51)).sqrt();
    bad_ii.m[0][0] = xi + d.scale(t);
    // iii: only the polar latitude
    let bad_iii = kirchheim::assemble(&seeds[..1]);
    let toys: [(&str, KirchheimInput); 3] = [("i", bad_i), ("ii", bad_ii), ("iii", bad_iii)];
    for (label, input) in toys {
        let r = validate_kirchheim_input(&input, 10_000, 21, 1e-9);
        let labels = r.labels();
        ok &= labels == [label];
        notes.push(format!("toy {label}: labels {labels:?}"));
    }
    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("1 singular-value identities", singular_value_identities),
        ("2 theta and ordering", theta_ordering),
        ("3 oracle sandwich", oracle_sandwich),
        ("4 delta inclusion", delta_inclusion),
        ("5 laminate machinery", laminate_machinery),
        ("6 oscillation contract", oscillation_contract),
        ("7 relaxation estimate", relaxation_estimate),
        ("8 end-to-end decay", end_to_end),
        ("9 invariance", invariance),
        ("10 kirchheim validation", kirchheim_validation),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(m) => println!("PASS {name}: {m}"),
            Err(m) => {
                failed += 1;
                println!("FAIL {name}: {m}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
