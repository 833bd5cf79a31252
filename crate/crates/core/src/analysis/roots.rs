use super::{check_scalars, hopf_point, AnalysisError};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest residual accepted for a stored root.
const RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoot {
    pub lambda: Complex64,
    /// Delay at which `lambda` is a root (s).
    pub tau: f64,
}

impl CharacteristicRoot {
    pub fn residual(&self, beta_star: f64, gamma: f64) -> f64 {
        characteristic(beta_star, gamma, self.tau, self.lambda).norm()
    }
}

/// `lambda - gamma lambda e^{-lambda tau} + beta* e^{-lambda tau}`.
pub fn characteristic(beta_star: f64, gamma: f64, tau: f64, lambda: Complex64) -> Complex64 {
    let e = (-lambda * tau).exp();
    lambda - gamma * lambda * e + beta_star * e
}

struct Parts {
    f: Complex64,
    f_lambda: Complex64,
    f_tau: Complex64,
}

fn parts(beta: f64, gamma: f64, tau: f64, lambda: Complex64) -> Parts {
    let e = (-lambda * tau).exp();
    Parts {
        f: lambda - gamma * lambda * e + beta * e,
        f_lambda: 1.0 - gamma * e + gamma * lambda * tau * e - beta * tau * e,
        f_tau: lambda * e * (gamma * lambda - beta),
    }
}

/// `d lambda / d tau` along the root branch through `root`.
pub fn root_slope(beta: f64, gamma: f64, root: &CharacteristicRoot) -> Complex64 {
    let p = parts(beta, gamma, root.tau, root.lambda);
    -p.f_tau / p.f_lambda
}

/// Newton iteration in `lambda` at fixed `tau`; `None` when it does not
/// settle on a root close to `guess`.
fn correct(beta: f64, gamma: f64, tau: f64, guess: Complex64) -> Option<Complex64> {
    let mut lambda = guess;
    for _ in 0..40 {
        let p = parts(beta, gamma, tau, lambda);
        let delta = p.f / p.f_lambda;
        lambda -= delta;
        if !(lambda.re.is_finite() && lambda.im.is_finite()) {
            return None;
        }
        if delta.norm() <= 1e-15 * lambda.norm().max(1.0) {
            break;
        }
    }
    let ok = characteristic(beta, gamma, tau, lambda).norm() <= RESIDUAL
        && (lambda - guess).norm() <= 1e-2 * guess.norm().max(1.0);
    ok.then_some(lambda)
}

/// Root near `guess` at delay `tau`.
pub fn root_near(beta: f64, gamma: f64, tau: f64, guess: Complex64) -> Result<CharacteristicRoot, AnalysisError> {
    correct(beta, gamma, tau, guess)
        .map(|lambda| CharacteristicRoot { lambda, tau })
        .ok_or_else(|| AnalysisError::Continuation {
            last_tau: tau,
            detail: format!("Newton iteration from {guess} did not converge"),
        })
}

/// Solves `F(j omega; tau) = 0` for `(omega, tau)` by two-dimensional Newton.
fn crossing_newton(beta: f64, gamma: f64, omega: f64, tau: f64) -> Option<(f64, f64)> {
    let (mut w, mut t) = (omega, tau);
    for _ in 0..60 {
        let p = parts(beta, gamma, t, Complex64::new(0.0, w));
        let a = Complex64::i() * p.f_lambda;
        let b = p.f_tau;
        let det = a.re * b.im - b.re * a.im;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let dw = (-p.f.re * b.im + b.re * p.f.im) / det;
        let dt = (-a.re * p.f.im + a.im * p.f.re) / det;
        w += dw;
        t += dt;
        if !(w > 0.0 && t > 0.0) {
            return None;
        }
        if dw.abs() <= 1e-15 * w && dt.abs() <= 1e-15 * t {
            break;
        }
    }
    let residual = characteristic(beta, gamma, t, Complex64::new(0.0, w)).norm();
    let moved = ((w - omega) / omega).abs().max(((t - tau) / tau).abs());
    (residual <= 1e-12 * w.max(1.0) && moved < 0.5).then_some((w, t))
}

/// Purely imaginary root of the principal crossing, continued in `gamma`
/// from the classical root `lambda = j beta*` at `tau = pi / (2 beta*)`.
pub fn hopf_seed(beta_star: f64, gamma: f64) -> Result<CharacteristicRoot, AnalysisError> {
    check_scalars(beta_star, gamma)?;
    let (mut omega, mut tau) = (beta_star, PI / (2.0 * beta_star));
    let mut g = 0.0;
    let mut dg: f64 = 0.02;
    while g < gamma {
        let target = (g + dg).min(gamma);
        match crossing_newton(beta_star, target, omega, tau) {
            Some((w, t)) => {
                omega = w;
                tau = t;
                g = target;
                dg = (dg * 1.5).min(0.05);
            }
            None => {
                dg /= 2.0;
                if dg < 1e-12 {
                    return Err(AnalysisError::Continuation {
                        last_tau: tau,
                        detail: format!("homotopy in gamma stalled at gamma = {g}"),
                    });
                }
            }
        }
    }
    Ok(CharacteristicRoot {
        lambda: Complex64::new(0.0, omega),
        tau,
    })
}

/// Roots of one branch, ordered by increasing delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RootBranch {
    pub beta_star: f64,
    pub gamma: f64,
    pub roots: Vec<CharacteristicRoot>,
}

fn march(
    beta: f64,
    gamma: f64,
    start: CharacteristicRoot,
    to: f64,
    max_step: f64,
) -> Result<Vec<CharacteristicRoot>, AnalysisError> {
    let mut out = Vec::new();
    let mut cur = start;
    let dir = (to - start.tau).signum();
    let mut h = max_step;
    while (to - cur.tau) * dir > 1e-12 * max_step {
        let remaining = (to - cur.tau).abs();
        let step = h.min(remaining);
        let tau_next = if step == remaining { to } else { cur.tau + dir * step };
        let predicted = cur.lambda + (tau_next - cur.tau) * root_slope(beta, gamma, &cur);
        match correct(beta, gamma, tau_next, predicted) {
            Some(lambda) => {
                cur = CharacteristicRoot { lambda, tau: tau_next };
                out.push(cur);
                h = (2.0 * h).min(max_step);
            }
            None => {
                h /= 2.0;
                if h < 1e-9 * max_step {
                    return Err(AnalysisError::Continuation {
                        last_tau: cur.tau,
                        detail: "step size underflow".into(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Continues the root through `seed` over `tau_range` with predictor-corrector
/// steps of at most `1e-3 tau_cr`.
pub fn track_root(
    beta_star: f64,
    gamma: f64,
    tau_range: (f64, f64),
    seed: CharacteristicRoot,
) -> Result<RootBranch, AnalysisError> {
    let tau_cr = hopf_point(beta_star, gamma)?.tau_cr;
    let (a, b) = tau_range;
    if !(a > 0.0 && a < b && b < 4.0 * tau_cr) {
        return Err(AnalysisError::Domain(format!(
            "delay range [{a}, {b}] must lie inside (0, 4 tau_cr = {})",
            4.0 * tau_cr
        )));
    }
    if !(seed.tau >= a && seed.tau <= b) {
        return Err(AnalysisError::Domain(format!("seed delay {} outside [{a}, {b}]", seed.tau)));
    }
    if !(seed.residual(beta_star, gamma) <= 1e-6 * seed.lambda.norm().max(1.0)) {
        return Err(AnalysisError::Domain(format!(
            "seed residual {} is too large",
            seed.residual(beta_star, gamma)
        )));
    }
    let start = root_near(beta_star, gamma, seed.tau, seed.lambda)?;
    let step = 1e-3 * tau_cr;
    let mut roots = march(beta_star, gamma, start, a, step)?;
    roots.reverse();
    roots.push(start);
    roots.extend(march(beta_star, gamma, start, b, step)?);
    Ok(RootBranch {
        beta_star,
        gamma,
        roots,
    })
}

/// First delay along the branch at which the root crosses the imaginary
/// axis, refined by Newton iteration on `Re lambda(tau)`.
pub fn imaginary_axis_crossing(branch: &RootBranch) -> Result<Option<CharacteristicRoot>, AnalysisError> {
    let (beta, gamma) = (branch.beta_star, branch.gamma);
    let Some(k) = branch
        .roots
        .windows(2)
        .position(|w| (w[0].lambda.re < 0.0) != (w[1].lambda.re < 0.0) || w[0].lambda.re == 0.0)
    else {
        return Ok(None);
    };
    let (lo, hi) = (branch.roots[k], branch.roots[k + 1]);
    if lo.lambda.re == 0.0 {
        return Ok(Some(lo));
    }
    let (mut left, mut right) = (lo.tau, hi.tau);
    let mut cur = if lo.lambda.re.abs() < hi.lambda.re.abs() { lo } else { hi };
    for _ in 0..50 {
        let slope = root_slope(beta, gamma, &cur);
        let mut next = cur.tau - cur.lambda.re / slope.re;
        if !(next > left && next < right) {
            next = 0.5 * (left + right);
        }
        let predicted = cur.lambda + (next - cur.tau) * slope;
        let root = root_near(beta, gamma, next, predicted)?;
        let moved = (root.tau - cur.tau).abs();
        if (root.lambda.re < 0.0) == (lo.lambda.re < 0.0) {
            left = root.tau;
        } else {
            right = root.tau;
        }
        cur = root;
        if cur.lambda.re == 0.0 || moved <= 1e-15 * cur.tau {
            break;
        }
    }
    Ok(Some(cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::transversality_slope;
    use std::f64::consts::FRAC_PI_2;

    fn crossing(beta: f64, gamma: f64) -> CharacteristicRoot {
        let seed = hopf_seed(beta, gamma).unwrap();
        let branch = track_root(beta, gamma, (0.5 * seed.tau, 1.5 * seed.tau), seed).unwrap();
        imaginary_axis_crossing(&branch).unwrap().expect("crossing")
    }

    #[test]
    fn classical_root_is_exactly_imaginary() {
        let r = root_near(1.0, 0.0, FRAC_PI_2, Complex64::new(0.0, 1.0)).unwrap();
        assert!(r.residual(1.0, 0.0) <= 1e-12);
        assert!((r.lambda - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn tracked_crossing_matches_closed_form() {
        for &(beta, gamma) in &[(1.0, 0.0), (1.0, 0.5), (1.0, 0.9), (3.7, 0.99), (0.1, 0.3)] {
            let hp = hopf_point(beta, gamma).unwrap();
            let c = crossing(beta, gamma);
            assert!(((c.tau - hp.tau_cr) / hp.tau_cr).abs() < 1e-8, "{beta} {gamma}");
            assert!(((c.lambda.im - hp.omega0) / hp.omega0).abs() < 1e-8);
        }
        let c = crossing(1.0, 0.5);
        assert!((c.tau - 0.906900).abs() < 1e-6);
        assert!((c.lambda.im - 1.154701).abs() < 1e-6);
    }

    #[test]
    fn half_critical_delay_is_stable() {
        let seed = hopf_seed(1.0, 0.5).unwrap();
        let branch = track_root(1.0, 0.5, (0.5 * seed.tau, seed.tau), seed).unwrap();
        assert!(branch.roots[0].lambda.re < 0.0);
        assert!(branch.roots.iter().all(|r| r.residual(1.0, 0.5) <= RESIDUAL));
        for w in branch.roots.windows(2) {
            assert!(w[1].tau > w[0].tau);
        }
    }

    #[test]
    fn finite_difference_slope_matches_transversality() {
        for &(beta, gamma) in &[(1.0, 0.0), (1.0, 0.5), (2.0, 0.9)] {
            let c = crossing(beta, gamma);
            let d = 1e-4;
            let slope = root_slope(beta, gamma, &c);
            let plus = root_near(beta, gamma, c.tau + d, c.lambda + d * slope).unwrap();
            let minus = root_near(beta, gamma, c.tau - d, c.lambda - d * slope).unwrap();
            let fd = (plus.lambda.re - minus.lambda.re) / (2.0 * d);
            let exact = transversality_slope(beta, gamma).unwrap();
            assert!(((fd - exact) / exact).abs() < 1e-2, "{fd} vs {exact}");
        }
    }

    #[test]
    fn range_precondition_is_enforced() {
        let seed = hopf_seed(1.0, 0.0).unwrap();
        assert!(matches!(
            track_root(1.0, 0.0, (0.5, 10.0), seed),
            Err(AnalysisError::Domain(_))
        ));
        let bad = CharacteristicRoot {
            lambda: Complex64::new(3.0, 0.0),
            tau: 1.0,
        };
        assert!(matches!(track_root(1.0, 0.0, (0.5, 2.0), bad), Err(AnalysisError::Domain(_))));
    }
}
