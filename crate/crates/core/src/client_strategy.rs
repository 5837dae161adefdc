//! Closed-form client best responses and the per-client threshold
//! quantities that let the server rewrite its objective as a function of
//! the single scalar `T` (the common round latency).
//!
//! For a client paid price `alpha`, the utility-maximising CPU frequency
//! has the closed form `(alpha / (2 beta v))^(1/3)`, clamped to `f_max`.
//! Inverting that map gives the price that pins the client to a target
//! latency, and equating it with the zero-utility price gives the
//! break-even latency `t_tilde`. Past `t_tilde` the client is held at its
//! break-even point and paid exactly its energy cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{comm_energy, comm_time, round_time, train_energy, ClientProfile, SystemConfig};
use crate::numeric::bisect_decreasing;

/// Relative bracket tolerance for the break-even bisection.
const T_TILDE_REL_TOL: f64 = 1e-12;

/// Cached per-client latency landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientThresholds {
    /// Fastest possible round latency (at `f_max`), s.
    pub t_min: f64,
    /// Break-even latency: the unique latency where the pinning price
    /// meets the zero-utility price, s.
    pub t_tilde: f64,
    /// Pinning price evaluated at `t_tilde`.
    pub alpha_at_t_tilde: f64,
    /// Upload time, s.
    pub t_com: f64,
    /// True when `t_min > t_tilde`: even at full speed the client sits
    /// past its break-even point and must be paid the minimum price.
    pub forced_min_price: bool,
}

impl ClientThresholds {
    /// Latency the client is held at once the system latency exceeds its
    /// break-even point.
    pub fn pinned_floor(&self) -> f64 {
        self.t_tilde.max(self.t_min)
    }
}

/// Stationary point of the client utility in `f`: `(alpha/(2 beta v))^(1/3)`.
pub fn unconstrained_best_response(client: &ClientProfile, alpha: f64) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::NonPositivePrice(alpha));
    }
    Ok((alpha / (2.0 * client.energy_cost * client.capacitance)).cbrt())
}

/// Utility-maximising frequency under the hardware cap: `min(f~, f_max)`.
pub fn best_response(client: &ClientProfile, alpha: f64) -> Result<f64> {
    Ok(unconstrained_best_response(client, alpha)?.min(client.f_max))
}

/// Lowest price that keeps the client at zero utility when it finishes a
/// round in `t_m` seconds using frequency `f`:
/// `beta (E_trn + E_com) / (T0 - t_m)`.
pub fn min_price(client: &ClientProfile, sys: &SystemConfig, t_m: f64, f: f64) -> Result<f64> {
    if t_m >= sys.t0 {
        return Err(Error::LatencyDomain {
            latency: t_m,
            reason: format!("at or beyond the deadline T0 = {}", sys.t0),
        });
    }
    let energy = train_energy(client, f)? + comm_energy(client, sys);
    Ok(client.energy_cost * energy / (sys.t0 - t_m))
}

/// Price that makes the client's unconstrained best response land exactly
/// on round latency `t_m`.
///
/// Strictly decreasing in `t_m`, diverging as `t_m` approaches the upload
/// time from above.
pub fn price_for_latency(client: &ClientProfile, sys: &SystemConfig, t_m: f64) -> Result<f64> {
    let t_com = comm_time(client, sys);
    if t_m <= t_com {
        return Err(Error::LatencyDomain {
            latency: t_m,
            reason: format!("not above the upload time {t_com}"),
        });
    }
    let f = client.work_cycles() / (t_m - t_com);
    Ok(2.0 * client.energy_cost * client.capacitance * f * f * f)
}

/// Computes the latency landmarks of one client.
///
/// Fails when even `f_max` cannot meet the deadline; such clients can
/// never participate. The break-even latency is the root of
/// `2 v f~(T)^3 (T0 - T) - v f~(T)^2 c I D - p |w| / r` with
/// `f~(T) = c I D / (T - t_com)`, which is strictly decreasing on
/// `(t_com, T0)` and always brackets a sign change there.
pub fn compute_thresholds(client: &ClientProfile, sys: &SystemConfig) -> Result<ClientThresholds> {
    let t_com = comm_time(client, sys);
    let t_min = round_time(client, sys, client.f_max)?;
    if t_min >= sys.t0 {
        return Err(Error::InfeasibleClient {
            id: client.id,
            t_min,
            t0: sys.t0,
        });
    }

    let work = client.work_cycles();
    let v = client.capacitance;
    let comm_cost = client.tx_power * sys.model_bits / crate::model::uplink_rate(client, sys);
    let balance = |t: f64| {
        let f = work / (t - t_com);
        2.0 * v * f * f * f * (sys.t0 - t) - v * f * f * work - comm_cost
    };
    let lo = t_com * (1.0 + 1e-9);
    let hi = sys.t0 * (1.0 - 1e-9);
    debug_assert!(balance(lo) > 0.0 && balance(hi) < 0.0);
    let t_tilde = bisect_decreasing(lo, hi, balance, T_TILDE_REL_TOL, 200);

    Ok(ClientThresholds {
        t_min,
        t_tilde,
        alpha_at_t_tilde: price_for_latency(client, sys, t_tilde)?,
        t_com,
        forced_min_price: t_min > t_tilde,
    })
}

/// Latency the client actually runs at when the system latency target is
/// `t`: the common `t` while the client is still worth pushing, its
/// break-even floor afterwards.
pub fn pinned_latency(th: &ClientThresholds, t: f64) -> Result<f64> {
    check_target(th, t)?;
    if t <= th.t_tilde {
        Ok(t)
    } else {
        Ok(th.pinned_floor())
    }
}

/// Price paid to the client at system latency target `t`: the pinning
/// price on the pushed branch, the zero-utility minimum past break-even.
pub fn pinned_price(
    client: &ClientProfile,
    sys: &SystemConfig,
    th: &ClientThresholds,
    t: f64,
) -> Result<f64> {
    check_target(th, t)?;
    if t <= th.t_tilde {
        price_for_latency(client, sys, t)
    } else {
        let floor = th.pinned_floor();
        let f = client.work_cycles() / (floor - th.t_com);
        min_price(client, sys, floor, f)
    }
}

/// Per-round payment the client receives at system latency target `t`.
/// Continuous at the break-even point and constant beyond it.
pub fn payment(
    client: &ClientProfile,
    sys: &SystemConfig,
    th: &ClientThresholds,
    t: f64,
) -> Result<f64> {
    let latency = pinned_latency(th, t)?;
    let price = pinned_price(client, sys, th, t)?;
    Ok(price * (sys.t0 - latency))
}

/// Derivative of [`payment`] with respect to the latency target.
///
/// On the pushed branch:
/// `-2 beta v (c I D / (t - t_com))^3 (1 + 3 (T0 - t) / (t - t_com))`;
/// zero past the break-even point where the payment is constant.
pub fn payment_derivative(
    client: &ClientProfile,
    sys: &SystemConfig,
    th: &ClientThresholds,
    t: f64,
) -> Result<f64> {
    check_target(th, t)?;
    if t > th.t_tilde {
        return Ok(0.0);
    }
    let gap = t - th.t_com;
    let f = client.work_cycles() / gap;
    Ok(-2.0
        * client.energy_cost
        * client.capacitance
        * f
        * f
        * f
        * (1.0 + 3.0 * (sys.t0 - t) / gap))
}

fn check_target(th: &ClientThresholds, t: f64) -> Result<()> {
    if t < th.t_min {
        return Err(Error::LatencyDomain {
            latency: t,
            reason: format!("below the client's latency floor {}", th.t_min),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{client_utility, uplink_rate};
    use crate::testutil::{approx_rel, default_system, example_client, seeded_feasible_clients};

    #[test]
    fn unconstrained_best_response_examples() {
        let mut c = example_client();
        c.energy_cost = 1.0;
        c.capacitance = 1e-28;
        // alpha = 2 beta v gives exactly 1 Hz.
        let f = unconstrained_best_response(&c, 2.0 * 1e-28).unwrap();
        assert!(approx_rel(f, 1.0, 1e-12));
        // Frozen from 10^(28/3).
        let f = unconstrained_best_response(&c, 2.0).unwrap();
        assert!(approx_rel(f, 2.154434690031884e9, 1e-12));
        // Cube-root homogeneity.
        let f8 = unconstrained_best_response(&c, 16.0).unwrap();
        assert!(approx_rel(f8, 2.0 * f, 1e-12));
        assert!(unconstrained_best_response(&c, 0.0).is_err());
    }

    #[test]
    fn best_response_clamps_at_f_max() {
        let mut c = example_client();
        c.f_max = 2e9;
        // Unconstrained response 2.1544e9 exceeds the cap.
        assert_eq!(best_response(&c, 2.0).unwrap(), 2e9);
        // Interior response is untouched.
        let small = best_response(&c, 2e-10).unwrap();
        assert!(small < c.f_max);
        assert!(approx_rel(
            small,
            unconstrained_best_response(&c, 2e-10).unwrap(),
            1e-15
        ));
    }

    #[test]
    fn best_response_maximises_utility_on_grid() {
        let sys = default_system();
        for (i, c) in seeded_feasible_clients(0xA11CE, 50).into_iter().enumerate() {
            let alpha = 1e-4 * (1.0 + i as f64);
            let f_star = best_response(&c, alpha).unwrap();
            let u_star = client_utility(&c, &sys, alpha, f_star).unwrap();
            for k in 1..=2000 {
                let f = c.f_max * k as f64 / 2000.0;
                let u = client_utility(&c, &sys, alpha, f).unwrap();
                assert!(
                    u_star >= u - 1e-9 * u.abs().max(1e-12),
                    "client {i}: grid beat closed form at f={f}"
                );
            }
        }
    }

    #[test]
    fn min_price_examples() {
        let sys = default_system();
        let c = example_client();
        let f = 2.5e8;
        let t_m = round_time(&c, &sys, f).unwrap();
        let a = min_price(&c, &sys, t_m, f).unwrap();
        // 0.063125 / 7.4, frozen.
        assert!(approx_rel(a, 8.530405405405405e-3, 1e-12));
        assert!(client_utility(&c, &sys, a, f).unwrap().abs() < 1e-15);
        // Pole at the deadline.
        assert!(min_price(&c, &sys, sys.t0 - 1e-9, f).unwrap() > 1e6 * a);
        assert!(min_price(&c, &sys, sys.t0, f).is_err());
    }

    #[test]
    fn price_for_latency_example_and_pole() {
        let sys = default_system();
        let c = example_client(); // r = 1e6, t_com = 0.6
        let a = price_for_latency(&c, &sys, 1.1).unwrap();
        assert!(approx_rel(a, 0.2, 1e-12));
        // Approaching the upload time the price diverges.
        let near = price_for_latency(&c, &sys, 0.6 + 1e-9).unwrap();
        assert!(near > 1e12);
        assert!(price_for_latency(&c, &sys, 0.6).is_err());
        assert!(price_for_latency(&c, &sys, 0.3).is_err());
    }

    #[test]
    fn price_for_latency_inverts_best_response() {
        let sys = default_system();
        for c in seeded_feasible_clients(0xBEEF, 100) {
            let t_min = round_time(&c, &sys, c.f_max).unwrap();
            let hi = sys.t0 * 0.9;
            if hi <= t_min {
                continue;
            }
            for k in 1..10 {
                // Latencies above t_min keep the response interior.
                let t = t_min + (hi - t_min) * k as f64 / 10.0;
                let alpha = price_for_latency(&c, &sys, t).unwrap();
                let f = best_response(&c, alpha).unwrap();
                let back = round_time(&c, &sys, f).unwrap();
                assert!(
                    approx_rel(back, t, 1e-9),
                    "round trip failed: {t} -> {back}"
                );
            }
        }
    }

    #[test]
    fn price_for_latency_strictly_decreasing() {
        let sys = default_system();
        let c = example_client();
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let t = 0.61 + (9.0 - 0.61) * k as f64 / 100.0;
            let a = price_for_latency(&c, &sys, t).unwrap();
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn thresholds_break_even_is_zero_utility() {
        let sys = default_system();
        for c in seeded_feasible_clients(0x7E57, 200) {
            let th = compute_thresholds(&c, &sys).unwrap();
            assert!(th.t_com < th.t_min && th.t_min < sys.t0);
            assert!(th.t_com < th.t_tilde && th.t_tilde < sys.t0);
            assert_eq!(th.forced_min_price, th.t_min > th.t_tilde);
            let f = c.work_cycles() / (th.t_tilde - th.t_com);
            let alpha = price_for_latency(&c, &sys, th.t_tilde).unwrap();
            let u = client_utility(&c, &sys, alpha, f).unwrap();
            let scale = c.energy_cost * (train_energy(&c, f).unwrap() + comm_energy(&c, &sys));
            assert!(
                u.abs() <= 1e-8 * scale,
                "break-even utility {u} above 1e-8 of energy cost {scale}"
            );
        }
    }

    #[test]
    fn thresholds_balance_sign_at_endpoints() {
        let sys = default_system();
        let c = example_client();
        let t_com = comm_time(&c, &sys);
        let work = c.work_cycles();
        let comm_cost = c.tx_power * sys.model_bits / uplink_rate(&c, &sys);
        let g = |t: f64| {
            let f = work / (t - t_com);
            2.0 * c.capacitance * f * f * f * (sys.t0 - t)
                - c.capacitance * f * f * work
                - comm_cost
        };
        assert!(g(t_com * (1.0 + 1e-9)) > 0.0);
        assert!(g(sys.t0 * (1.0 - 1e-9)) < 0.0);
    }

    #[test]
    fn break_even_matches_grid_scan() {
        let sys = default_system();
        for c in seeded_feasible_clients(0x5EED, 5) {
            let th = compute_thresholds(&c, &sys).unwrap();
            // Grid oracle: scan |U(price_for_latency(T), f(T))| over a dense
            // grid and keep the minimiser.
            let t_com = comm_time(&c, &sys);
            let lo = t_com * (1.0 + 1e-6);
            let hi = sys.t0 * (1.0 - 1e-6);
            let n = 1_000_000;
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=n {
                let t = lo + (hi - lo) * k as f64 / n as f64;
                let f = c.work_cycles() / (t - t_com);
                let alpha = price_for_latency(&c, &sys, t).unwrap();
                let u = client_utility(&c, &sys, alpha, f).unwrap().abs();
                if u < best.0 {
                    best = (u, t);
                }
            }
            assert!(
                (best.1 - th.t_tilde).abs() <= 1e-6 * th.t_tilde.max(1.0) + (hi - lo) / n as f64,
                "grid minimiser {} vs bisection {}",
                best.1,
                th.t_tilde
            );
        }
    }

    #[test]
    fn infeasible_client_is_rejected() {
        let sys = default_system();
        let mut c = example_client();
        // Tiny f_max pushes the training time past the deadline.
        c.f_max = 1e7;
        let err = compute_thresholds(&c, &sys).unwrap_err();
        assert!(matches!(err, Error::InfeasibleClient { .. }));
    }

    /// Client constructed so that t_min > t_tilde: at full speed it still
    /// sits past its break-even point.
    fn forced_client() -> ClientProfile {
        let mut c = example_client();
        c.f_max = 5e8 / 9.0; // t_trn(f_max) = 9 s, t_min = 9.6 s
        c
    }

    #[test]
    fn pinned_branches() {
        let sys = default_system();
        let c = example_client();
        let th = compute_thresholds(&c, &sys).unwrap();
        assert!(!th.forced_min_price);

        // Pushed branch: latency equals the target, price is the pinning price.
        let t = 0.5 * (th.t_min + th.t_tilde);
        assert_eq!(pinned_latency(&th, t).unwrap(), t);
        assert!(approx_rel(
            pinned_price(&c, &sys, &th, t).unwrap(),
            price_for_latency(&c, &sys, t).unwrap(),
            1e-15
        ));

        // Past break-even: held at t_tilde and paid the minimum price there.
        let beyond = th.t_tilde + 1.0;
        assert_eq!(pinned_latency(&th, beyond).unwrap(), th.t_tilde);
        let f = c.work_cycles() / (th.t_tilde - th.t_com);
        assert!(approx_rel(
            pinned_price(&c, &sys, &th, beyond).unwrap(),
            min_price(&c, &sys, th.t_tilde, f).unwrap(),
            1e-15
        ));

        // Below the floor is out of domain.
        assert!(pinned_latency(&th, th.t_min * 0.99).is_err());
    }

    #[test]
    fn forced_client_always_pinned_at_t_min() {
        let sys = default_system();
        let c = forced_client();
        let th = compute_thresholds(&c, &sys).unwrap();
        assert!(th.forced_min_price);
        for t in [th.t_min, th.t_min + 0.1, 9.9] {
            assert_eq!(pinned_latency(&th, t).unwrap(), th.t_min);
            let expect = min_price(&c, &sys, th.t_min, c.f_max).unwrap();
            assert!(approx_rel(
                pinned_price(&c, &sys, &th, t).unwrap(),
                expect,
                1e-12
            ));
            // Utility at the forced point is exactly zero.
            let u = client_utility(&c, &sys, expect, c.f_max).unwrap();
            assert!(u.abs() < 1e-12);
        }
    }

    #[test]
    fn payment_continuous_at_break_even_and_constant_beyond() {
        let sys = default_system();
        for c in seeded_feasible_clients(0xC0FFEE, 50) {
            let th = compute_thresholds(&c, &sys).unwrap();
            if th.forced_min_price || th.t_tilde + 1e-6 >= sys.t0 {
                continue;
            }
            let eps = 1e-9 * th.t_tilde;
            let below = payment(&c, &sys, &th, th.t_tilde - eps).unwrap();
            let above = payment(&c, &sys, &th, th.t_tilde + eps).unwrap();
            assert!(approx_rel(below, above, 1e-6), "{below} vs {above}");
            let far = payment(&c, &sys, &th, th.t_tilde + 1.0).unwrap();
            let farther = payment(&c, &sys, &th, th.t_tilde + 2.0).unwrap();
            assert_eq!(far, farther);
        }
    }

    #[test]
    fn payment_first_branch_example() {
        let sys = default_system();
        let c = example_client();
        let th = compute_thresholds(&c, &sys).unwrap();
        assert!(th.t_min <= 1.1 && 1.1 <= th.t_tilde);
        // price_for_latency(1.1) = 0.2, margin 8.9 s.
        assert!(approx_rel(
            payment(&c, &sys, &th, 1.1).unwrap(),
            1.78,
            1e-12
        ));
    }

    #[test]
    fn payment_monotone_and_convex_on_pushed_branch() {
        let sys = default_system();
        for c in seeded_feasible_clients(0xD00D, 50) {
            let th = compute_thresholds(&c, &sys).unwrap();
            if th.forced_min_price {
                continue;
            }
            let (lo, hi) = (th.t_min, th.t_tilde);
            if hi - lo < 1e-6 {
                continue;
            }
            let n = 200;
            let h = (hi - lo) / n as f64;
            let mut prev = f64::INFINITY;
            for k in 0..=n {
                let t = lo + h * k as f64;
                let r = payment(&c, &sys, &th, t).unwrap();
                assert!(r <= prev + 1e-12 * prev.abs(), "payment increased in T");
                prev = r;
                if k >= 2 {
                    let r0 = payment(&c, &sys, &th, lo + h * (k - 2) as f64).unwrap();
                    let r1 = payment(&c, &sys, &th, lo + h * (k - 1) as f64).unwrap();
                    assert!(r0 - 2.0 * r1 + r >= -1e-8 * r.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn payment_derivative_matches_finite_differences() {
        let sys = default_system();
        for c in seeded_feasible_clients(0xFD, 20) {
            let th = compute_thresholds(&c, &sys).unwrap();
            if th.forced_min_price {
                continue;
            }
            let span = th.t_tilde - th.t_min;
            if span < 1e-3 {
                continue;
            }
            for k in 1..=100 {
                let t = th.t_min + span * k as f64 / 101.0;
                let h = 1e-6 * t;
                if t - h <= th.t_min || t + h >= th.t_tilde {
                    continue;
                }
                let ana = payment_derivative(&c, &sys, &th, t).unwrap();
                let fd = (payment(&c, &sys, &th, t + h).unwrap()
                    - payment(&c, &sys, &th, t - h).unwrap())
                    / (2.0 * h);
                assert!(
                    (ana - fd).abs() <= 1e-4 * ana.abs().max(fd.abs()),
                    "client {}: analytic {ana} vs fd {fd} at t={t}",
                    c.id
                );
                assert!(
                    ana < 0.0,
                    "derivative must be negative on the pushed branch"
                );
            }
            // Constant past break-even.
            assert_eq!(
                payment_derivative(&c, &sys, &th, th.t_tilde + 0.5).unwrap(),
                0.0
            );
        }
    }
}
