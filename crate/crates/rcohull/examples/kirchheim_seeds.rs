//! Searches seeds for the consistent Kirchheim toy used by the acceptance
//! run and writes them to `tests/data/kirchheim_seeds.txt`.
//!
//! Latitudes are placed greedily from ψ = 0 up to π/4 (the mirror covers
//! the rest). At each latitude a random-restart hill climb picks κ, the
//! segment directions, their stopping fractions and a box aspect, and
//! minimises the number of torus copies per unit of latitude needed to tile
//! the largest box whose 5×5×5 grid is covered.
//!
//! Usage: cargo run --release --example kirchheim_seeds [-- samples]

#[path = "../tests/support/kirchheim.rs"]
mod kirchheim;

use std::f64::consts::{FRAC_PI_4, PI};

use kirchheim::{assemble, sphere_point, Seed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcohull::walker::{validate_kirchheim_input, KirchheimInput};

/// Fraction of a covered box each copy is trusted with.
const OVERLAP: f64 = 0.75;

#[derive(Clone)]
struct Candidate {
    seed: Seed,
    aspect: [f64; 3],
}

fn covers(input: &KirchheimInput, psi: f64, b: [f64; 3]) -> bool {
    (-2..=2).all(|i| {
        (-2..=2).all(|j| {
            (-2..=2).all(|k| input.locate(&sphere_point(psi + b[0] * i as f64 / 2.0, b[1] * j as f64 / 2.0, b[2] * k as f64 / 2.0)).is_some())
        })
    })
}

fn copies(half_width: f64) -> usize {
    if half_width >= PI {
        1
    } else {
        (2.0 * PI / (2.0 * OVERLAP * half_width)).ceil() as usize
    }
}

/// Largest covered box of the candidate's aspect, or `None`.
fn largest_box(c: &Candidate) -> Option<[f64; 3]> {
    let (xi, m) = c.seed.hull();
    if m.len() < 5 {
        return None;
    }
    let input = KirchheimInput { e: vec![xi], m: vec![m] };
    let boxed = |s: f64| [s * c.aspect[0], (s * c.aspect[1]).min(PI), (s * c.aspect[2]).min(PI)];
    let (mut lo, mut hi) = (0.01, 1.0);
    if !covers(&input, c.seed.psi, boxed(lo)) {
        return None;
    }
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if covers(&input, c.seed.psi, boxed(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(boxed(lo))
}

fn cost(c: &Candidate) -> f64 {
    match largest_box(c) {
        Some(b) => (copies(b[1]) * copies(b[2])) as f64 / (2.0 * OVERLAP * b[0]),
        None => f64::INFINITY,
    }
}

fn random_candidate(rng: &mut ChaCha8Rng, psi: f64) -> Candidate {
    Candidate {
        seed: Seed {
            psi,
            kappa: rng.random_range(1.05..1.6),
            dirs: (0..15).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-PI..PI), rng.random_range(0.2..0.8))).collect(),
            copies: (1, 1),
        },
        aspect: [rng.random_range(0.1..1.0), rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)],
    }
}

fn climb(rng: &mut ChaCha8Rng, mut c: Candidate, iters: usize) -> (Candidate, f64) {
    let mut cur = cost(&c);
    let mut step = 0.3;
    for it in 0..iters {
        let mut e = c.clone();
        let k = rng.random_range(0..e.seed.dirs.len());
        match rng.random_range(0..4) {
            0 => e.seed.kappa = (e.seed.kappa + 0.1 * step * rng.random_range(-1.0..1.0)).clamp(1.01, 3.0),
            1 => {
                e.seed.dirs[k].0 += step * rng.random_range(-1.0..1.0);
                e.seed.dirs[k].1 += step * rng.random_range(-1.0..1.0);
            }
            2 => e.seed.dirs[k].2 = (e.seed.dirs[k].2 + step * rng.random_range(-0.5..0.5)).clamp(0.02, 0.98),
            _ => {
                for a in &mut e.aspect {
                    *a *= (step * rng.random_range(-1.0..1.0f64)).exp();
                }
            }
        }
        let s = cost(&e);
        if s <= cur {
            c = e;
            cur = s;
        }
        if it % 1000 == 999 {
            step *= 0.7;
        }
    }
    (c, cur)
}

fn best_at(rng: &mut ChaCha8Rng, psi: f64, warm: Option<&Candidate>) -> Option<(Candidate, [f64; 3])> {
    let mut best: Option<(Candidate, f64)> = None;
    for restart in 0..6 {
        let start = match (restart, warm) {
            (0, Some(w)) => Candidate { seed: Seed { psi, ..w.seed.clone() }, aspect: w.aspect },
            _ => random_candidate(rng, psi),
        };
        let (c, s) = climb(rng, start, 3000);
        if best.as_ref().map_or(true, |b| s < b.1) {
            best = Some((c, s));
        }
    }
    let (c, _) = best?;
    let b = largest_box(&c)?;
    Some((c, b))
}

fn main() {
    let samples: usize = std::env::args().nth(1).map_or(100_000, |s| s.parse().expect("sample count"));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seeds: Vec<Seed> = Vec::new();
    let mut reached = -1e-3;
    let mut guess = 0.0;
    let mut warm: Option<Candidate> = None;
    while reached < FRAC_PI_4 + 0.02 {
        let (mut c, mut b) = best_at(&mut rng, guess, warm.as_ref()).expect("no covered box at this latitude");
        // move down and search again until the band meets what is covered
        while c.seed.psi - OVERLAP * b[0] > reached {
            let psi = (reached + 0.9 * OVERLAP * b[0]).max(0.0);
            (c, b) = best_at(&mut rng, psi, Some(&c)).expect("no covered box at this latitude");
        }
        c.seed.copies = (copies(b[1]), copies(b[2]));
        reached = c.seed.psi + OVERLAP * b[0];
        eprintln!("psi {:.4} box {:.3?} copies {:?} reached {reached:.4}", c.seed.psi, b, c.seed.copies);
        seeds.push(c.seed.clone());
        guess = reached + 0.5 * OVERLAP * b[0];
        warm = Some(c);
    }
    let input = assemble(&seeds);
    eprintln!("{} hulls", input.e.len());
    let report = validate_kirchheim_input(&input, samples, 11, 1e-9);
    eprintln!("{samples} samples: {report:?}");
    let text: String = seeds.iter().map(|s| s.to_line() + "\n").collect();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/kirchheim_seeds.txt");
    std::fs::write(path, text).expect("write seeds");
}
