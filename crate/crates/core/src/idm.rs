//! Car-following acceleration kernel.
//!
//! Computes a vehicle's acceleration from its speed, the gap to its leader,
//! and their speed difference, with two smooth lower bounds: the desired
//! spacing is passed through a softplus so it never goes negative, and the
//! acceleration itself is clamped (again via softplus) so the next Euler
//! speed update can never produce a negative speed and never exceeds the
//! configured maximum deceleration.
//!
//! Every partial derivative of the clamped acceleration is available in
//! closed form through [`idm_acceleration_grad`], which is what the backward
//! pass of the simulation engine consumes.

use crate::error::{Error, Result};

/// Gaps are clamped to this floor (m) before division so the interaction
/// term stays finite even when vehicles overlap.
pub const EPS_GAP: f64 = 0.1;

/// Standard spacing-policy exponent used when none is configured.
pub const DEFAULT_DELTA: f64 = 4.0;

/// Driver-behavior parameters. The first five are the optimizable set;
/// `delta` and `a_min` stay fixed during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    /// Maximum acceleration (m/s^2), > 0.
    pub a_max: f64,
    /// Preferred (comfortable) acceleration (m/s^2), > 0.
    pub a_pref: f64,
    /// Minimum distance gap (m), > 0.
    pub s_min: f64,
    /// Preferred time headway (s), > 0.
    pub t_pref: f64,
    /// Target speed (m/s), > 0.
    pub v_targ: f64,
    /// Spacing-policy exponent, dimensionless.
    pub delta: f64,
    /// Maximum physically valid deceleration (m/s^2), < 0.
    pub a_min: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a_max: 10.0,
            a_pref: 2.0,
            s_min: 5.0,
            t_pref: 1.0,
            v_targ: 50.0,
            delta: DEFAULT_DELTA,
            a_min: -10.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.a_max, self.a_pref, self.s_min, self.t_pref, self.v_targ, self.delta, self.a_min,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::invalid("non-finite driver parameter"));
        }
        if self.a_max <= 0.0 || self.a_pref <= 0.0 || self.s_min <= 0.0 || self.t_pref <= 0.0 {
            return Err(Error::invalid(
                "a_max, a_pref, s_min and t_pref must be positive",
            ));
        }
        if self.v_targ <= 0.0 {
            return Err(Error::invalid("v_targ must be positive"));
        }
        if self.a_min >= 0.0 {
            return Err(Error::invalid("a_min must be negative"));
        }
        Ok(())
    }
}

/// Per-step kernel input for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmInput {
    /// Current speed (m/s), >= 0.
    pub speed: f64,
    /// Bumper-to-bumper gap to the leader (m); clamped to [`EPS_GAP`] before use.
    pub gap: f64,
    /// Closing speed: own speed minus leader speed (m/s).
    pub closing: f64,
    /// Integration timestep (s), > 0.
    pub dt: f64,
}

impl IdmInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.gap.is_finite() && self.closing.is_finite() && self.dt.is_finite()) {
            return Err(Error::invalid("non-finite kernel input"));
        }
        if self.speed < 0.0 {
            return Err(Error::invalid("speed must be non-negative"));
        }
        if self.dt <= 0.0 {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(())
    }
}

/// Partials of the clamped acceleration with respect to the kernel inputs
/// and the five optimizable parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdmGradient {
    pub d_speed: f64,
    pub d_gap: f64,
    pub d_closing: f64,
    pub d_a_max: f64,
    pub d_a_pref: f64,
    pub d_s_min: f64,
    pub d_t_pref: f64,
    pub d_v_targ: f64,
}

/// Overflow-safe `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Overflow-safe logistic function; the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw desired spacing: jam distance plus headway plus the braking
/// interaction term. May be negative; the caller soft-clamps it.
pub fn optimal_spacing(params: &IdmParams, speed: f64, closing: f64) -> f64 {
    params.s_min
        + speed * params.t_pref
        + speed * closing / (2.0 * (params.a_max * params.a_pref).sqrt())
}

/// Hot-path acceleration without argument validation. The engine validates
/// state once per rollout and keeps speeds non-negative by construction.
#[inline]
pub(crate) fn accel_clamped(params: &IdmParams, speed: f64, gap: f64, closing: f64, dt: f64) -> f64 {
    let gap = gap.max(EPS_GAP);
    let spacing = softplus(optimal_spacing(params, speed, closing));
    let ratio = spacing / gap;
    let a_raw =
        params.a_max * (1.0 - (speed / params.v_targ).powf(params.delta) - ratio * ratio);
    let a_lb = (-speed / dt).max(params.a_min);
    a_lb + softplus(a_raw - a_lb)
}

/// Clamped acceleration (m/s^2). Guaranteed `>= max(-speed/dt, a_min)`, so a
/// subsequent Euler update keeps the speed non-negative.
pub fn idm_acceleration(params: &IdmParams, input: &IdmInput) -> Result<f64> {
    params.validate()?;
    input.validate()?;
    Ok(accel_clamped(params, input.speed, input.gap, input.closing, input.dt))
}

#[inline]
pub(crate) fn accel_grad_clamped(
    params: &IdmParams,
    speed: f64,
    gap: f64,
    closing: f64,
    dt: f64,
) -> (f64, IdmGradient) {
    let gap_clamped = gap.max(EPS_GAP);
    // Subgradient of the clamp: zero on the clamped branch, ties included.
    let d_gapc_d_gap = if gap > EPS_GAP { 1.0 } else { 0.0 };

    let root = 2.0 * (params.a_max * params.a_pref).sqrt();
    let s_opt = params.s_min + speed * params.t_pref + speed * closing / root;
    let spacing = softplus(s_opt);
    let sig_spacing = sigmoid(s_opt);

    let ratio = spacing / gap_clamped;
    let speed_ratio = speed / params.v_targ;
    let pow = speed_ratio.powf(params.delta);
    let a_raw = params.a_max * (1.0 - pow - ratio * ratio);

    let a_lb = (-speed / dt).max(params.a_min);
    let sig = sigmoid(a_raw - a_lb);
    let accel = a_lb + softplus(a_raw - a_lb);

    // d a_raw / d spacing and / d gap_clamped.
    let d_araw_d_spacing = -2.0 * params.a_max * ratio / gap_clamped;
    let d_araw_d_gapc = 2.0 * params.a_max * ratio * ratio / gap_clamped;
    // d a_raw / d speed through the speed-ratio term. powf(delta - 1) is
    // well-defined at speed = 0 for delta > 1.
    let d_pow_d_speed = if speed == 0.0 {
        0.0
    } else {
        params.delta * pow / speed
    };
    let d_araw_d_speed_direct = -params.a_max * d_pow_d_speed;
    let d_pow_d_vtarg = -params.delta * pow / params.v_targ;

    // Raw-spacing partials.
    let d_sopt_d_speed = params.t_pref + closing / root;
    let d_sopt_d_closing = speed / root;
    let d_sopt_d_amax = -speed * closing / (2.0 * params.a_max * root);
    let d_sopt_d_apref = -speed * closing / (2.0 * params.a_pref * root);

    // Chain through the softplus spacing clamp.
    let spacing_chain = d_araw_d_spacing * sig_spacing;

    // Lower-bound branch derivative; tie broken toward the a_min branch.
    let d_alb_d_speed = if -speed / dt > params.a_min { -1.0 / dt } else { 0.0 };

    let grad = IdmGradient {
        d_speed: sig * (d_araw_d_speed_direct + spacing_chain * d_sopt_d_speed)
            + (1.0 - sig) * d_alb_d_speed,
        d_gap: sig * d_araw_d_gapc * d_gapc_d_gap,
        d_closing: sig * spacing_chain * d_sopt_d_closing,
        d_a_max: sig * ((1.0 - pow - ratio * ratio) + spacing_chain * d_sopt_d_amax),
        d_a_pref: sig * spacing_chain * d_sopt_d_apref,
        d_s_min: sig * spacing_chain,
        d_t_pref: sig * spacing_chain * speed,
        d_v_targ: sig * (-params.a_max * d_pow_d_vtarg),
    };
    (accel, grad)
}

/// Acceleration plus all eight partials in one pass.
pub fn idm_acceleration_grad(params: &IdmParams, input: &IdmInput) -> Result<(f64, IdmGradient)> {
    params.validate()?;
    input.validate()?;
    Ok(accel_grad_clamped(params, input.speed, input.gap, input.closing, input.dt))
}

/// Gap at which the clamped acceleration equals `target` for the given
/// speed with zero closing speed, found by bisection; the acceleration is
/// strictly increasing in the gap. Returns `upper` when even an open road
/// cannot reach the target (speed at or above the target speed).
pub fn gap_for_acceleration(
    params: &IdmParams,
    speed: f64,
    dt: f64,
    target: f64,
    upper: f64,
) -> f64 {
    let eval = |gap: f64| accel_clamped(params, speed, gap, 0.0, dt);
    if eval(upper) <= target {
        return upper;
    }
    let mut lo = EPS_GAP;
    if eval(lo) >= target {
        return lo;
    }
    let mut hi = upper;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // reference values keep their full 17 digits
mod tests {
    use super::*;

    fn defaults() -> IdmParams {
        IdmParams::default()
    }

    #[test]
    fn softplus_analytic_values() {
        assert!((softplus(0.0) - 2.0f64.ln()).abs() < 1e-15);
        // High-precision reference: log(1 + exp(-3)).
        assert!((softplus(-3.0) - 0.048587351573742059).abs() < 1e-15);
        assert!((softplus(40.0) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_dominates_and_is_safe_in_tails() {
        for &x in &[-1e4, -745.0, -20.0, -1.0, 0.0, 1.0, 20.0, 709.0, 1e4, 1e300] {
            let y = softplus(x);
            assert!(y.is_finite(), "softplus({x}) not finite");
            assert!(y >= x.max(0.0) - 1e-12, "softplus({x}) = {y} below max(x, 0)");
        }
    }

    #[test]
    fn sigmoid_matches_softplus_slope() {
        for &x in &[-30.0, -2.0, 0.0, 0.5, 10.0, 35.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((sigmoid(x) - fd).abs() < 2e-8);
        }
    }

    #[test]
    fn optimal_spacing_examples() {
        let p = defaults();
        assert_eq!(optimal_spacing(&p, 0.0, 0.0), 5.0);
        assert_eq!(optimal_spacing(&p, 10.0, 0.0), 15.0);
        // 15 - 40 / (2 sqrt(20)), evaluated to full precision externally.
        assert!((optimal_spacing(&p, 10.0, -4.0) - 10.527864045000421).abs() < 1e-12);
    }

    #[test]
    fn acceleration_reference_values() {
        let p = defaults();
        let a = idm_acceleration(&p, &IdmInput { speed: 10.0, gap: 30.0, closing: 0.0, dt: 0.1 })
            .unwrap();
        assert!((a - 7.4839999235475589).abs() < 1e-9, "a = {a}");

        let a = idm_acceleration(&p, &IdmInput { speed: 50.0, gap: 1e6, closing: 0.0, dt: 0.1 })
            .unwrap();
        assert!((a - 4.5368650590150196e-5).abs() < 1e-12);
        assert!(a.abs() < 1e-3);
    }

    #[test]
    fn zero_speed_never_decelerates() {
        for gap in [0.0, 0.05, 0.5, 3.0, 1e4] {
            for closing in [-5.0, 0.0, 5.0] {
                let a = idm_acceleration(
                    &defaults(),
                    &IdmInput { speed: 0.0, gap, closing, dt: 0.1 },
                )
                .unwrap();
                assert!(a >= 0.0, "a = {a} at gap {gap}, closing {closing}");
            }
        }
    }

    #[test]
    fn lower_bound_respected_and_next_speed_non_negative() {
        // Also pins the upper slack: a_raw never exceeds a_max, so the
        // softplus shift keeps a* within log 2 of it.
        let p = defaults();
        for &speed in &[0.0, 0.3, 1.0, 7.0, 25.0, 49.0] {
            for &gap in &[0.01, 0.2, 2.0, 15.0, 120.0] {
                for &closing in &[-10.0, -1.0, 0.0, 4.0, 12.0] {
                    for &dt in &[0.05, 0.1, 1.0] {
                        let a = idm_acceleration(&p, &IdmInput { speed, gap, closing, dt }).unwrap();
                        let a_lb = (-speed / dt).max(p.a_min);
                        assert!(a >= a_lb - 1e-9);
                        assert!(a <= p.a_max + 0.7);
                        assert!(speed + dt * a >= -1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn clamp_is_monotone_in_raw_acceleration() {
        // Increasing the gap increases a_raw; the clamped output must
        // follow. Strict growth holds once the softplus tail is above the
        // f64 underflow floor; deep in the tail the output saturates at the
        // lower bound, so the weaker non-decreasing check applies there.
        let p = defaults();
        let mut last = f64::NEG_INFINITY;
        for i in 0..400 {
            let gap = 0.5 + i as f64 * 0.25;
            let a = idm_acceleration(&p, &IdmInput { speed: 20.0, gap, closing: 0.0, dt: 0.1 })
                .unwrap();
            if last > p.a_min + 1e-12 {
                assert!(a > last, "not strictly increasing at gap {gap}");
            } else {
                assert!(a >= last);
            }
            last = a;
        }
        assert!(last > 5.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let p = defaults();
        let bad = [
            IdmInput { speed: -1.0, gap: 10.0, closing: 0.0, dt: 0.1 },
            IdmInput { speed: 1.0, gap: 10.0, closing: 0.0, dt: 0.0 },
            IdmInput { speed: 1.0, gap: f64::NAN, closing: 0.0, dt: 0.1 },
            IdmInput { speed: 1.0, gap: 10.0, closing: f64::INFINITY, dt: 0.1 },
        ];
        for input in bad {
            assert!(idm_acceleration(&p, &input).is_err(), "{input:?}");
        }
        let mut p_bad = p;
        p_bad.a_min = 0.5;
        assert!(p_bad.validate().is_err());
    }

    #[test]
    fn gradient_zero_headway_chain_at_zero_speed() {
        // d s_opt / d t_pref = speed, so the t_pref partial vanishes at rest.
        let (_, g) = idm_acceleration_grad(
            &defaults(),
            &IdmInput { speed: 0.0, gap: 20.0, closing: 0.0, dt: 0.1 },
        )
        .unwrap();
        assert_eq!(g.d_t_pref, 0.0);
    }

    #[test]
    fn gradient_matches_named_finite_difference() {
        let p = defaults();
        let input = IdmInput { speed: 10.0, gap: 30.0, closing: 0.0, dt: 0.1 };
        let (_, g) = idm_acceleration_grad(&p, &input).unwrap();
        let h = 1e-5;
        let up = idm_acceleration(&p, &IdmInput { gap: input.gap + h, ..input }).unwrap();
        let dn = idm_acceleration(&p, &IdmInput { gap: input.gap - h, ..input }).unwrap();
        let fd = (up - dn) / (2.0 * h);
        assert!((g.d_gap - fd).abs() <= 1e-5 * fd.abs().max(1e-7));
    }

    #[test]
    fn gradient_value_matches_plain_kernel() {
        let p = defaults();
        for &(speed, gap, closing) in
            &[(0.0, 5.0, 0.0), (12.0, 22.0, -3.0), (30.0, 0.05, 8.0), (49.0, 400.0, 1.0)]
        {
            let input = IdmInput { speed, gap, closing, dt: 0.1 };
            let a = idm_acceleration(&p, &input).unwrap();
            let (a2, _) = idm_acceleration_grad(&p, &input).unwrap();
            assert_eq!(a.to_bits(), a2.to_bits());
        }
    }
}
