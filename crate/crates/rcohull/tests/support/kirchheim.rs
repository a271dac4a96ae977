//! A consistent Kirchheim toy in 2×2: seeds per latitude of ∂B_{1/2},
//! replicated by the torus action X ↦ R(θ) X R(φ) and mirrored by
//! X ↦ X diag(1, -1).
//!
//! In complex coordinates X ↔ (z, w) we have |X|² = |z|² + |w|², rank one
//! iff |z| = |w|, and R(θ) X R(φ) multiplies z by e^{i(θ+φ)} and w by
//! e^{i(θ-φ)}. A seed at latitude ψ puts ξ on the ray through
//! (cos ψ, sin ψ)/2 and sends rank-one segments from ξ into the ball of
//! radius `INNER`.

#![allow(dead_code)]

use std::f64::consts::PI;

use rcohull::walker::KirchheimInput;
use rcohull::Matrix;

pub const INNER: f64 = 0.49;

/// `X` with complex coordinates `z = (z0, z1)`, `w = (w0, w1)`.
pub fn zw(z: (f64, f64), w: (f64, f64)) -> Matrix {
    let s = 0.5f64.sqrt();
    Matrix::new2([[s * (z.0 + w.0), s * (w.1 - z.1)], [s * (z.1 + w.1), s * (z.0 - w.0)]])
}

pub fn cis(angle: f64, r: f64) -> (f64, f64) {
    (r * angle.cos(), r * angle.sin())
}

/// Point of the sphere |X| = 1/2 at latitude `psi` and torus angles.
pub fn sphere_point(psi: f64, alpha: f64, beta: f64) -> Matrix {
    zw(cis(alpha, 0.5 * psi.cos()), cis(beta, 0.5 * psi.sin()))
}

fn rotation(t: f64) -> Matrix {
    Matrix::new2([[t.cos(), -t.sin()], [t.sin(), t.cos()]])
}

/// Shifts the z phase by `alpha` and the w phase by `beta`.
pub fn torus(x: &Matrix, alpha: f64, beta: f64) -> Matrix {
    rotation(0.5 * (alpha + beta)) * *x * rotation(0.5 * (alpha - beta))
}

pub fn mirror(x: &Matrix) -> Matrix {
    *x * Matrix::diag(&[1.0, -1.0])
}

/// One latitude: ξ = κ·q(ψ) and one rank-one segment per `(a, b, f)`,
/// direction -(e^{ia}, e^{ib})/√2, stopped at fraction `f` of its chord
/// through the inner ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub psi: f64,
    pub kappa: f64,
    pub dirs: Vec<(f64, f64, f64)>,
    pub copies: (usize, usize),
}

impl Seed {
    pub fn hull(&self) -> (Matrix, Vec<Matrix>) {
        let xi = zw(cis(0.0, 0.5 * self.kappa * self.psi.cos()), cis(0.0, 0.5 * self.kappa * self.psi.sin()));
        let mut m = Vec::new();
        for &(a, b, f) in &self.dirs {
            let d = zw(cis(a + PI, 0.5f64.sqrt()), cis(b + PI, 0.5f64.sqrt()));
            let half_b = xi.dot(&d);
            let disc = half_b * half_b - (xi.norm_sq() - INNER * INNER);
            if disc <= 0.0 {
                continue;
            }
            let (t1, t2) = ((-half_b - disc.sqrt()).max(0.0), -half_b + disc.sqrt());
            if t2 <= 0.0 {
                continue;
            }
            m.push(xi + d.scale(t1 + f.clamp(0.02, 0.98) * (t2 - t1)));
        }
        (xi, m)
    }

    /// One line: psi kappa copies_alpha copies_beta then a b f per segment.
    pub fn to_line(&self) -> String {
        let mut s = format!("{:.17} {:.17} {} {}", self.psi, self.kappa, self.copies.0, self.copies.1);
        for (a, b, f) in &self.dirs {
            s.push_str(&format!(" {a:.17} {b:.17} {f:.17}"));
        }
        s
    }

    pub fn parse(line: &str) -> Option<Self> {
        let v: Vec<&str> = line.split_whitespace().collect();
        if v.len() < 4 || (v.len() - 4) % 3 != 0 {
            return None;
        }
        let num = |s: &str| s.parse::<f64>().ok();
        let dirs = v[4..].chunks(3).map(|c| Some((num(c[0])?, num(c[1])?, num(c[2])?))).collect::<Option<Vec<_>>>()?;
        Some(Self { psi: num(v[0])?, kappa: num(v[1])?, dirs, copies: (v[2].parse().ok()?, v[3].parse().ok()?) })
    }
}

/// All seeds, torus copies and mirror images.
pub fn assemble(seeds: &[Seed]) -> KirchheimInput {
    let mut e = Vec::new();
    let mut m = Vec::new();
    for seed in seeds {
        let (xi, ms) = seed.hull();
        let (na, nb) = seed.copies;
        for i in 0..na {
            for j in 0..nb {
                let (alpha, beta) = (2.0 * PI * i as f64 / na as f64, 2.0 * PI * j as f64 / nb as f64);
                for flip in [false, true] {
                    let map = |x: &Matrix| {
                        let y = torus(x, alpha, beta);
                        if flip {
                            mirror(&y)
                        } else {
                            y
                        }
                    };
                    e.push(map(&xi));
                    m.push(ms.iter().map(map).collect());
                }
            }
        }
    }
    KirchheimInput { e, m }
}

pub fn parse_seeds(text: &str) -> Vec<Seed> {
    text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).filter_map(Seed::parse).collect()
}
