//! J̃_ν(r) = J_ν(r) / r^ν for real order ν ≥ 0.
//!
//! Three branches: the power series near the origin, Miller's backward
//! recurrence in the middle range, and Hankel's asymptotic expansion beyond
//! `switch_radius(ν)`. For half-integer orders the Hankel series terminates
//! and is exact.

use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Radius above which the asymptotic branch is used.
pub fn switch_radius(nu: f64) -> f64 {
    12.0 + 0.5 * nu * nu
}

/// J̃_ν(0) = 1 / (2^ν Γ(ν+1)).
pub fn bessel_tilde_at_zero(nu: f64) -> f64 {
    if nu < 100.0 {
        1.0 / (2f64.powf(nu) * gamma(nu + 1.0))
    } else {
        (-(nu * 2f64.ln()) - ln_gamma(nu + 1.0)).exp()
    }
}

pub fn bessel_tilde(nu: f64, r: f64) -> f64 {
    assert!(
        nu >= 0.0 && r >= 0.0,
        "bessel_tilde needs ν ≥ 0 and r ≥ 0 (got ν={nu}, r={r})"
    );
    if r == 0.0 {
        return bessel_tilde_at_zero(nu);
    }
    if r <= series_limit(nu) {
        series(nu, r)
    } else if r <= switch_radius(nu) {
        miller(nu, r) / r.powf(nu)
    } else {
        hankel(nu, r) / r.powf(nu)
    }
}

/// Plain J_ν(r).
pub fn bessel_j(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    bessel_tilde(nu, r) * r.powf(nu)
}

fn series_limit(nu: f64) -> f64 {
    // The alternating series loses about r²/(2(ν+1)) nats to cancellation.
    2.0f64.max((4.0 * (nu + 1.0)).sqrt())
}

pub(crate) fn series(nu: f64, r: f64) -> f64 {
    let q = -0.25 * r * r;
    let mut term = bessel_tilde_at_zero(nu);
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (nu + kf));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Hankel's expansion of J_ν(r).
pub(crate) fn hankel(nu: f64, r: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let chi = r - nu * FRAC_PI_2 - FRAC_PI_4;
    let mut p = 0.0;
    let mut q = 0.0;
    // a_k / r^k with a_k = Π_{j≤k} (μ − (2j−1)²) / (k! 8^k)
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..80usize {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= (mu - odd * odd) / (k as f64 * 8.0 * r);
        }
        let mag = a.abs();
        if k > 2 && mag > last {
            break; // asymptotic series started to diverge
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
        if a == 0.0 || mag < 1e-18 {
            break;
        }
        last = mag;
    }
    (2.0 / (PI * r)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Miller's backward recurrence normalised by the Neumann-type identity
/// (r/2)^a = Σ_k (a+2k) Γ(a+k)/k! J_{a+2k}(r), with 1 = J_0 + 2Σ J_{2k} at a = 0.
pub(crate) fn miller(nu: f64, r: f64) -> f64 {
    let mut a = nu - nu.floor();
    let mut p = nu.floor() as usize;
    if a > 1.0 - 1e-14 {
        a = 0.0;
        p += 1;
    }
    let integer_order = a < 1e-14;
    let top = (r.max(nu) + 30.0 + 4.0 * r.sqrt()).ceil() as usize + p + 2;
    let top = top + top % 2;
    // Weights for even indices, built upward.
    let half = top / 2 + 1;
    let mut w = vec![0.0; half];
    if integer_order {
        w[0] = 1.0;
        for wk in w.iter_mut().skip(1) {
            *wk = 2.0;
        }
    } else {
        let mut ratio = gamma(a); // Γ(a+k)/k!
        for (k, wk) in w.iter_mut().enumerate() {
            if k > 0 {
                ratio *= (a + k as f64 - 1.0) / k as f64;
            }
            *wk = (a + 2.0 * k as f64) * ratio;
        }
    }
    let mut f_next = 0.0; // F_{j+1}
    let mut f_cur = 1e-300; // F_j at j = top
    let mut norm = if top.is_multiple_of(2) {
        w[top / 2] * f_cur
    } else {
        0.0
    };
    let mut at_p = if top == p { f_cur } else { 0.0 };
    for j in (1..=top).rev() {
        let f_prev = 2.0 * (a + j as f64) / r * f_cur - f_next;
        f_next = f_cur;
        f_cur = f_prev;
        let idx = j - 1;
        if idx % 2 == 0 {
            norm += w[idx / 2] * f_cur;
        }
        if idx == p {
            at_p = f_cur;
        }
        if f_cur.abs() > 1e250 {
            f_cur *= 1e-250;
            f_next *= 1e-250;
            norm *= 1e-250;
            at_p *= 1e-250;
        }
    }
    let scale = if integer_order {
        1.0
    } else {
        (0.5 * r).powf(a)
    };
    at_p * scale / norm
}
