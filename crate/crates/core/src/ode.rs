//! Numeric integration of pliant episodes: classic fixed-step RK4 with
//! bisection-located guard crossings and fixed-step output sampling.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{BinOp, Expr};
use crate::builtins::Builtins;
use crate::eval::{eval, EvalError, Layered};
use crate::value::{Valuation, Value};

/// Numeric parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericConfig {
    /// Maximum integration step, seconds.
    pub dt_max: f64,
    /// Crossing-location tolerance on time, seconds.
    pub eps_t: f64,
    /// Residual tolerance for equality guards on continuous quantities.
    pub eps_guard: f64,
    /// Output sampling step, seconds.
    pub sample_step: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            dt_max: 1e-3,
            eps_t: 1e-9,
            eps_guard: 1e-9,
            sample_step: 0.05,
        }
    }
}

/// The joint continuous system of one episode.
#[derive(Debug, Clone, Default)]
pub struct OdeSystem {
    /// Driven pliant variables, in deterministic order.
    pub state_vars: Vec<String>,
    /// Right-hand side per state variable.
    pub rhs: Vec<Expr>,
    /// Pliant direct assignments `y := E(…)`, re-evaluated continuously.
    pub direct_assigns: Vec<(String, Expr)>,
}

/// A continuous guard atom watched during integration.
#[derive(Debug, Clone)]
pub struct Residual {
    pub lhs: Expr,
    pub rhs: Expr,
    pub op: BinOp,
    /// Variable to project onto the exact guard surface when the
    /// crossing fires (equality atoms of the shape `v = E`).
    pub snap_var: Option<String>,
}

/// A set of residual atoms that must all hold for a watched event to
/// become enabled; the discrete part of its guard was checked upstream.
#[derive(Debug, Clone)]
pub struct WatchGuard {
    /// Caller-chosen identifier, returned in the termination cause.
    pub id: usize,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminationCause {
    /// Watched guards became true; all ids crossing within `eps_t` of
    /// the earliest instant are reported together.
    GuardCrossing(Vec<usize>),
    HorizonReached,
    /// State left the finite range.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub end_time: f64,
    /// Left limit at `end_time`: crossing events read this as their
    /// before-state. Snapped onto the guard surface at crossings.
    pub end_valuation: Valuation,
    /// `(time, valuation)` at the sampling grid; the first sample is at
    /// the episode start.
    pub samples: Vec<(f64, Valuation)>,
    pub cause: TerminationCause,
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("right-hand side evaluation failed at t={t}: {source}")]
    Rhs { t: f64, source: EvalError },
    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("invalid integration window: t0={t0}, t_max={t_max}")]
    BadWindow { t0: f64, t_max: f64 },
}

/// Everything an episode needs to evaluate expressions: the frozen
/// frame (mode variables and undriven pliant variables), constants,
/// clock offsets and the time variable.
pub struct EpisodeEnv<'a> {
    pub frame: &'a Valuation,
    pub consts: &'a BTreeMap<String, Value>,
    pub clock_offsets: &'a BTreeMap<String, f64>,
    pub time_var: Option<&'a str>,
    pub builtins: &'a Builtins,
}

impl<'a> EpisodeEnv<'a> {
    /// Build the full valuation at (t, state).
    fn valuation(&self, sys: &OdeSystem, t: f64, state: &[f64]) -> Result<Valuation, OdeError> {
        let mut v = self.frame.clone();
        v.t = t;
        for (name, val) in sys.state_vars.iter().zip(state) {
            v.vars.insert(name.clone(), Value::Real(*val));
        }
        if let Some(tv) = self.time_var {
            v.vars.insert(tv.to_string(), Value::Real(t));
        }
        for (clk, off) in self.clock_offsets {
            v.vars.insert(clk.clone(), Value::Real(t - off));
        }
        for (name, e) in &sys.direct_assigns {
            let val = eval(e, &Layered(&v, self.consts), self.builtins)
                .map_err(|source| OdeError::Rhs { t, source })?;
            v.vars.insert(name.clone(), val);
        }
        Ok(v)
    }

    fn eval_f64(&self, e: &Expr, v: &Valuation, t: f64) -> Result<f64, OdeError> {
        let val = eval(e, &Layered(v, self.consts), self.builtins)
            .map_err(|source| OdeError::Rhs { t, source })?;
        val.as_f64().ok_or(OdeError::Rhs {
            t,
            source: EvalError::Type {
                context: "continuous expression".into(),
                expected: "number",
                got: val.kind_name().to_string(),
            },
        })
    }
}

fn derivs(
    sys: &OdeSystem,
    env: &EpisodeEnv,
    t: f64,
    state: &[f64],
) -> Result<Vec<f64>, OdeError> {
    let v = env.valuation(sys, t, state)?;
    sys.rhs
        .iter()
        .map(|e| env.eval_f64(e, &v, t))
        .collect()
}

fn rk4_step(
    sys: &OdeSystem,
    env: &EpisodeEnv,
    t: f64,
    state: &[f64],
    h: f64,
) -> Result<Vec<f64>, OdeError> {
    let k1 = derivs(sys, env, t, state)?;
    let mid1: Vec<f64> = state.iter().zip(&k1).map(|(y, k)| y + 0.5 * h * k).collect();
    let k2 = derivs(sys, env, t + 0.5 * h, &mid1)?;
    let mid2: Vec<f64> = state.iter().zip(&k2).map(|(y, k)| y + 0.5 * h * k).collect();
    let k3 = derivs(sys, env, t + 0.5 * h, &mid2)?;
    let end: Vec<f64> = state.iter().zip(&k3).map(|(y, k)| y + h * k).collect();
    let k4 = derivs(sys, env, t + h, &end)?;
    Ok(state
        .iter()
        .enumerate()
        .map(|(i, y)| y + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Monotone bisection of a sign change of `f` on `[lo, hi]` down to
/// `eps_t`. The caller guarantees `f(lo)` and `f(hi)` straddle zero.
pub fn locate_crossing(
    f: &mut dyn FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    eps_t: f64,
) -> Result<f64, OdeError> {
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(OdeError::NoSignChange { lo, hi });
    }
    let mut sign_a = fa.signum();
    let iters = (((hi - lo) / eps_t).log2().ceil() as usize).max(1);
    for _ in 0..iters {
        if b - a <= eps_t {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == sign_a {
            a = mid;
        } else {
            b = mid;
            let _ = &mut sign_a;
        }
    }
    Ok(b)
}

fn residual_holds(r: &Residual, value: f64, eps_guard: f64) -> bool {
    match r.op {
        BinOp::Eq => value.abs() <= eps_guard,
        BinOp::Lt => value < 0.0,
        BinOp::Le => value <= eps_guard,
        BinOp::Gt => value > 0.0,
        BinOp::Ge => value >= -eps_guard,
        BinOp::Ne => value.abs() > eps_guard,
        _ => false,
    }
}

/// Integrate one pliant episode from `t0` until `t_max` or until the
/// earliest watched-guard crossing, whichever comes first.
///
/// The step is `cfg.dt_max`, with output samples on the
/// `cfg.sample_step` grid anchored at `t0` and the usual halving-style
/// bisection near crossings. Crossing instants are located to within
/// `cfg.eps_t`; equality atoms of the form `v = E` are snapped exactly
/// onto their surface in the returned end valuation.
pub fn integrate_episode(
    sys: &OdeSystem,
    env: &EpisodeEnv,
    t0: f64,
    watch: &[WatchGuard],
    t_max: f64,
    cfg: &NumericConfig,
) -> Result<EpisodeResult, OdeError> {
    if !(t0 < t_max) || cfg.dt_max <= 0.0 {
        return Err(OdeError::BadWindow { t0, t_max });
    }
    let mut state: Vec<f64> = Vec::with_capacity(sys.state_vars.len());
    for name in &sys.state_vars {
        let v = env
            .frame
            .get(name)
            .and_then(Value::as_f64)
            .ok_or(OdeError::Rhs {
                t: t0,
                source: EvalError::UnknownIdent(name.clone()),
            })?;
        state.push(v);
    }

    let first = env.valuation(sys, t0, &state)?;
    let mut samples = vec![(t0, first.clone())];

    let residual_at = |r: &Residual, v: &Valuation, t: f64| -> Result<f64, OdeError> {
        Ok(env.eval_f64(&r.lhs, v, t)? - env.eval_f64(&r.rhs, v, t)?)
    };
    let eval_residuals = |v: &Valuation, t: f64| -> Result<Vec<Vec<f64>>, OdeError> {
        watch
            .iter()
            .map(|w| w.residuals.iter().map(|r| residual_at(r, v, t)).collect())
            .collect()
    };

    let mut prev_res = eval_residuals(&first, t0)?;
    let mut t = t0;
    let mut k_dt: u64 = 0;
    let mut k_s: u64 = 0;

    loop {
        if t >= t_max {
            let v = env.valuation(sys, t_max, &state)?;
            return Ok(EpisodeResult {
                end_time: t_max,
                end_valuation: v,
                samples,
                cause: TerminationCause::HorizonReached,
            });
        }
        // next boundary: dt grid, sample grid or the horizon, whichever
        // is first; grid points are computed, not accumulated
        let next_dt = t0 + (k_dt + 1) as f64 * cfg.dt_max;
        let next_s = t0 + (k_s + 1) as f64 * cfg.sample_step;
        let next = next_dt.min(next_s).min(t_max);
        let h = next - t;
        let new_state = if sys.state_vars.is_empty() {
            state.clone()
        } else {
            rk4_step(sys, env, t, &state, h)?
        };
        if new_state.iter().any(|y| !y.is_finite()) {
            let v = env.valuation(sys, t, &state)?;
            return Ok(EpisodeResult {
                end_time: t,
                end_valuation: v,
                samples,
                cause: TerminationCause::Infeasible,
            });
        }
        let v_next = env.valuation(sys, next, &new_state)?;
        let cur_res = eval_residuals(&v_next, next)?;

        // per-atom residual slopes over this step; the located instant is
        // only within eps_t of the root, so sibling equality atoms are
        // satisfied up to |slope| · eps_t rather than eps_guard
        let slopes: Vec<Vec<f64>> = prev_res
            .iter()
            .zip(&cur_res)
            .map(|(ps, cs)| {
                ps.iter()
                    .zip(cs)
                    .map(|(p, c)| ((c - p) / h).abs())
                    .collect()
            })
            .collect();
        let atom_tol = |wi: usize, ri: usize| cfg.eps_guard + slopes[wi][ri] * cfg.eps_t * 4.0;

        let state_at = |tau: f64| -> Result<Vec<f64>, OdeError> {
            if sys.state_vars.is_empty() || tau == t {
                Ok(state.clone())
            } else {
                rk4_step(sys, env, t, &state, tau - t)
            }
        };
        let guard_holds = |wi: usize, vv: &Valuation, tau: f64| -> Result<bool, OdeError> {
            for (ri, r) in watch[wi].residuals.iter().enumerate() {
                let val = residual_at(r, vv, tau)?;
                let ok = match r.op {
                    BinOp::Eq => val.abs() <= atom_tol(wi, ri),
                    _ => residual_holds(r, val, cfg.eps_guard),
                };
                if !ok {
                    return Ok(false);
                }
            }
            Ok(true)
        };

        // earliest instant in (t, next] where some watched guard holds
        let mut earliest: Option<f64> = None;
        for (wi, w) in watch.iter().enumerate() {
            for (ri, r) in w.residuals.iter().enumerate() {
                let (a, b) = (prev_res[wi][ri], cur_res[wi][ri]);
                if a == 0.0 && b == 0.0 {
                    continue; // identically satisfied along the step
                }
                let candidate = if b == 0.0 {
                    Some(next)
                } else if a != 0.0 && a.signum() != b.signum() {
                    let base_state = state.clone();
                    let mut f = |tau: f64| -> f64 {
                        let st = if sys.state_vars.is_empty() || tau == t {
                            base_state.clone()
                        } else {
                            rk4_step(sys, env, t, &base_state, tau - t)
                                .unwrap_or_else(|_| base_state.clone())
                        };
                        match env.valuation(sys, tau, &st) {
                            Ok(v) => residual_at(r, &v, tau).unwrap_or(f64::NAN),
                            Err(_) => f64::NAN,
                        }
                    };
                    locate_crossing(&mut f, t, next, cfg.eps_t).ok()
                } else {
                    None
                };
                if let Some(tau) = candidate {
                    let vv = env.valuation(sys, tau, &state_at(tau)?)?;
                    if guard_holds(wi, &vv, tau)? {
                        earliest = Some(match earliest {
                            None => tau,
                            Some(e) => e.min(tau),
                        });
                    }
                }
            }
        }

        if let Some(tau) = earliest {
            let mut vv = env.valuation(sys, tau, &state_at(tau)?)?;
            // all guards crossing within eps_t of tau fire together
            let mut ids = Vec::new();
            for (wi, w) in watch.iter().enumerate() {
                if guard_holds(wi, &vv, tau)? {
                    ids.push(w.id);
                    // snap equality atoms exactly onto their surface
                    for r in &w.residuals {
                        if r.op == BinOp::Eq {
                            if let Some(snap) = &r.snap_var {
                                if let Ok(target) = env.eval_f64(&r.rhs, &vv, tau) {
                                    vv.vars.insert(snap.clone(), Value::Real(target));
                                }
                            }
                        }
                    }
                }
            }
            return Ok(EpisodeResult {
                end_time: tau,
                end_valuation: vv,
                samples,
                cause: TerminationCause::GuardCrossing(ids),
            });
        }

        state = new_state;
        t = next;
        if next == next_dt {
            k_dt += 1;
        }
        if next == next_s {
            k_s += 1;
            samples.push((t, v_next.clone()));
        }
        prev_res = cur_res;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Rational;

    fn env_with<'a>(
        frame: &'a Valuation,
        consts: &'a BTreeMap<String, Value>,
        clocks: &'a BTreeMap<String, f64>,
        builtins: &'a Builtins,
    ) -> EpisodeEnv<'a> {
        EpisodeEnv {
            frame,
            consts,
            clock_offsets: clocks,
            time_var: Some("t"),
            builtins,
        }
    }

    fn expr(src: &str) -> Expr {
        let text = format!("CONTEXT C\n  THEOREMS\n    0 = {src}\nEND\n");
        let r = crate::parser::parse_unit(&crate::parser::SourceUnit::new("x.heb", text));
        assert!(!r.has_errors(), "{:?}", r.diagnostics);
        let e = match r.constructs[0].theorems().next().unwrap() {
            Expr::Binary(BinOp::Eq, _, rhs) => (**rhs).clone(),
            _ => unreachable!(),
        };
        e
    }

    #[test]
    fn constant_derivative_crossing_is_located_exactly() {
        // D drx = Vdr × (wx − thex) with Vdr=2, thex=0, wx=1, drx(0)=0:
        // drx(t) = 2t, so drx = 1 crosses at t = 0.5
        let frame = Valuation::new(0.0)
            .with("drx", Value::Real(0.0))
            .with("thex", Value::Real(0.0));
        let consts: BTreeMap<String, Value> = [
            ("Vdr".to_string(), Value::Real(2.0)),
            ("wx".to_string(), Value::Real(1.0)),
        ]
        .into();
        let clocks = BTreeMap::new();
        let b = Builtins::standard();
        let env = env_with(&frame, &consts, &clocks, &b);
        let sys = OdeSystem {
            state_vars: vec!["drx".into()],
            rhs: vec![expr("Vdr × (wx − thex)")],
            direct_assigns: vec![],
        };
        let watch = [WatchGuard {
            id: 7,
            residuals: vec![Residual {
                lhs: Expr::ident("drx"),
                rhs: Expr::Num(Rational::from_int(1)),
                op: BinOp::Eq,
                snap_var: Some("drx".into()),
            }],
        }];
        let r = integrate_episode(&sys, &env, 0.0, &watch, 10.0, &NumericConfig::default()).unwrap();
        match r.cause {
            TerminationCause::GuardCrossing(ids) => assert_eq!(ids, vec![7]),
            other => panic!("expected crossing, got {other:?}"),
        }
        assert!((r.end_time - 0.5).abs() <= 1e-9, "crossing at {}", r.end_time);
        // snapped exactly onto the surface
        assert_eq!(r.end_valuation.get("drx"), Some(&Value::Real(1.0)));
    }

    #[test]
    fn zero_rhs_runs_to_horizon() {
        let frame = Valuation::new(0.0).with("x", Value::Real(3.5));
        let consts = BTreeMap::new();
        let clocks = BTreeMap::new();
        let b = Builtins::standard();
        let env = env_with(&frame, &consts, &clocks, &b);
        let sys = OdeSystem::default();
        let r = integrate_episode(&sys, &env, 0.0, &[], 1.0, &NumericConfig::default()).unwrap();
        assert_eq!(r.cause, TerminationCause::HorizonReached);
        assert_eq!(r.end_time, 1.0);
        assert_eq!(r.end_valuation.get("x"), Some(&Value::Real(3.5)));
        // samples on the 0.05 grid, first at the episode start
        assert_eq!(r.samples.len(), 21);
        assert_eq!(r.samples[0].0, 0.0);
    }

    #[test]
    fn rk4_is_exact_for_cubic_polynomials() {
        // D y = 3 t², y(0) = 0 → y(t) = t³ exactly under RK4
        let frame = Valuation::new(0.0).with("y", Value::Real(0.0));
        let consts = BTreeMap::new();
        let clocks = BTreeMap::new();
        let b = Builtins::standard();
        let env = env_with(&frame, &consts, &clocks, &b);
        let sys = OdeSystem {
            state_vars: vec!["y".into()],
            rhs: vec![expr("3 × t × t")],
            direct_assigns: vec![],
        };
        let r = integrate_episode(&sys, &env, 0.0, &[], 1.0, &NumericConfig::default()).unwrap();
        let y = r.end_valuation.get("y").unwrap().as_f64().unwrap();
        assert!((y - 1.0).abs() < 1e-12, "y(1) = {y}");
    }

    #[test]
    fn determinism_bitwise() {
        let frame = Valuation::new(0.0).with("y", Value::Real(1.0));
        let consts = BTreeMap::new();
        let clocks = BTreeMap::new();
        let b = Builtins::standard();
        let env = env_with(&frame, &consts, &clocks, &b);
        let sys = OdeSystem {
            state_vars: vec!["y".into()],
            rhs: vec![expr("0 − y")],
            direct_assigns: vec![],
        };
        let r1 = integrate_episode(&sys, &env, 0.0, &[], 2.0, &NumericConfig::default()).unwrap();
        let r2 = integrate_episode(&sys, &env, 0.0, &[], 2.0, &NumericConfig::default()).unwrap();
        let y1 = r1.end_valuation.get("y").unwrap().as_f64().unwrap();
        let y2 = r2.end_valuation.get("y").unwrap().as_f64().unwrap();
        assert_eq!(y1.to_bits(), y2.to_bits());
        assert_eq!(r1.samples.len(), r2.samples.len());
    }

    #[test]
    fn locate_crossing_analytic_root() {
        let mut f = |t: f64| 2.0 * t - 1.0;
        let tau = locate_crossing(&mut f, 0.4, 0.6, 1e-9).unwrap();
        assert!((tau - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn locate_crossing_rejects_same_sign() {
        let mut f = |t: f64| t + 1.0;
        assert!(matches!(
            locate_crossing(&mut f, 0.0, 1.0, 1e-9),
            Err(OdeError::NoSignChange { .. })
        ));
    }

    #[test]
    fn locate_crossing_randomized_linear_residuals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let root: f64 = rng.gen_range(-5.0..5.0);
            let slope: f64 = if rng.gen_bool(0.5) {
                rng.gen_range(0.1..50.0)
            } else {
                -rng.gen_range(0.1..50.0)
            };
            let lo = root - rng.gen_range(0.01..2.0);
            let hi = root + rng.gen_range(0.01..2.0);
            let mut f = |t: f64| slope * (t - root);
            let tau = locate_crossing(&mut f, lo, hi, 1e-9).unwrap();
            assert!(
                (tau - root).abs() <= 1e-9,
                "root {root}, located {tau}, err {}",
                (tau - root).abs()
            );
        }
    }

    #[test]
    fn infeasible_on_nonfinite_state() {
        // D y = y² blows up in finite time from y(0)=1 around t=1
        let frame = Valuation::new(0.0).with("y", Value::Real(1.0));
        let consts = BTreeMap::new();
        let clocks = BTreeMap::new();
        let b = Builtins::standard();
        let env = env_with(&frame, &consts, &clocks, &b);
        let sys = OdeSystem {
            state_vars: vec!["y".into()],
            rhs: vec![expr("y × y")],
            direct_assigns: vec![],
        };
        let r = integrate_episode(&sys, &env, 0.0, &[], 5.0, &NumericConfig::default()).unwrap();
        assert_eq!(r.cause, TerminationCause::Infeasible);
    }
}
