use crate::assimilate::BeliefPath;
use crate::eventstats::EventRecord;
use crate::models::DampingForcingParams;
use crate::models::{TopographicModel, Wavevector};
use crate::simulate::Trajectory;

pub const DAMPING_FORCING_FEATURES: [&str; 18] = [
    "u_peak",
    "abs_u_peak",
    "duration",
    "slope_pre",
    "mean_u_pre",
    "mean_gamma_pre",
    "mean_b_pre",
    "mean_G_pre",
    "mean_B_pre",
    "int_G",
    "int_B",
    "signed_int_G",
    "signed_int_B",
    "rel_damping",
    "rel_forcing",
    "u_tm1",
    "gamma_tm1",
    "b_tm1",
];

pub const TOPOGRAPHIC_FEATURES: [&str; 29] = [
    "V_peak",
    "abs_V_peak",
    "S_pre_short",
    "S_pre_long",
    "S_post",
    "std_pre",
    "mean_pre",
    "mean_post",
    "E_tot_peak",
    "E_tot_pre_mean",
    "E_tot_pre_max",
    "E_upper",
    "E_zonal",
    "E_lower",
    "E_merid",
    "E_upper_max",
    "E_zonal_max",
    "E_lower_max",
    "R1",
    "R2",
    "R3",
    "re_phi_1_1_pre",
    "re_phi_2_1_pre",
    "re_phi_1_0_pre",
    "re_phi_1_m1_pre",
    "re_phi_2_m1_pre",
    "re_phi_1_1_peak",
    "re_phi_1_0_peak",
    "re_phi_1_m1_peak",
];

pub const UPPER: [Wavevector; 2] = [[1, 1], [2, 1]];
pub const ZONAL: [Wavevector; 2] = [[1, 0], [2, 0]];
pub const LOWER: [Wavevector; 2] = [[1, -1], [2, -1]];
pub const MERIDIONAL: [Wavevector; 2] = [[0, 1], [0, 2]];

/// Pre-peak window length for the damping-forcing features.
pub const PRE_WINDOW: f64 = 1.5;

/// Feature values for one event; `degenerate` marks a zero-denominator
/// ratio that was replaced by 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Where hidden-state signals come from.
#[derive(Debug, Clone, Copy)]
pub enum HiddenSource<'a> {
    Truth,
    SmootherMean(&'a BeliefPath),
}

impl HiddenSource<'_> {
    fn at(&self, traj: &Trajectory, i: usize) -> Option<Vec<f64>> {
        match self {
            HiddenSource::Truth => traj.hidden_at(i).map(<[f64]>::to_vec),
            HiddenSource::SmootherMean(p) => p.beliefs.get(i).map(|b| b.mean.iter().copied().collect()),
        }
    }
}

/// Least-squares slope of `v` against `t`.
pub fn regression_slope(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let vm = v.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(v).map(|(a, b)| (a - tm) * (b - vm)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn trapezoid(dt: f64, v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Width of the contiguous interval around `peak` where the series keeps at
/// least half the peak magnitude with the same sign, with linear
/// interpolation at the crossings.
pub fn half_height_duration(series: &[f64], peak: usize, dt: f64) -> f64 {
    let sign = if series[peak] >= 0.0 { 1.0 } else { -1.0 };
    let half = 0.5 * series[peak].abs();
    let f = |i: usize| sign * series[i] - half;
    let mut left = peak as f64;
    let mut i = peak;
    while i > 0 {
        if f(i - 1) < 0.0 {
            left = (i - 1) as f64 + (-f(i - 1)) / (f(i) - f(i - 1));
            break;
        }
        i -= 1;
        left = i as f64;
    }
    let mut right = peak as f64;
    let mut j = peak;
    while j + 1 < series.len() {
        if f(j + 1) < 0.0 {
            right = j as f64 + f(j) / (f(j) - f(j + 1));
            break;
        }
        j += 1;
        right = j as f64;
    }
    (right - left) * dt
}

/// Inclusive index range for `[t_* + a, t_* + b]`, or `None` if it leaves the grid.
fn window(peak: usize, dt: f64, a: f64, b: f64, len: usize) -> Option<(usize, usize)> {
    let lo = peak as i64 + (a / dt).round() as i64;
    let hi = peak as i64 + (b / dt).round() as i64;
    (lo >= 0 && hi < len as i64 && lo <= hi).then_some((lo as usize, hi as usize))
}

/// The 18 damping-forcing features, in order. `Err` carries the exclusion reason.
pub fn features_damping_forcing(
    event: &EventRecord,
    traj: &Trajectory,
    params: &DampingForcingParams,
    hidden: HiddenSource<'_>,
) -> Result<FeatureRow, String> {
    let dt = traj.dt;
    let p = event.peak_index;
    let u = traj.obs_series(0);
    if p >= u.len() {
        return Err("peak index outside the trajectory".into());
    }
    let (lo, hi) = window(p, dt, -PRE_WINDOW, 0.0, u.len()).ok_or("pre-peak window clipped at trajectory start")?;
    let m1 = window(p, dt, -1.0, -1.0, u.len()).ok_or("t_* - 1 outside the trajectory")?.0;
    let hidden_at = |i: usize| hidden.at(traj, i).filter(|h| h.len() >= 2).ok_or("hidden state unavailable");

    let ts: Vec<f64> = (lo..=hi).map(|i| traj.time(i)).collect();
    let uw = &u[lo..=hi];
    let mut gam = Vec::with_capacity(uw.len());
    let mut b = Vec::with_capacity(uw.len());
    for i in lo..=hi {
        let h = hidden_at(i)?;
        gam.push(h[0]);
        b.push(h[1]);
    }
    let g: Vec<f64> = uw.iter().zip(&gam).map(|(u, g)| (-params.d_u + params.c * g) * u).collect();
    let sign = event.sign as f64;
    let int_g = trapezoid(dt, &g);
    let int_b = trapezoid(dt, &b);
    let abs_g = trapezoid(dt, &g.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let abs_b = trapezoid(dt, &b.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let denom = abs_g + abs_b;
    let degenerate = !(denom > 0.0);
    let (rel_g, rel_b) = if degenerate { (0.0, 0.0) } else { (abs_g / denom, abs_b / denom) };
    let h1 = hidden_at(m1)?;

    let values = vec![
        u[p],
        u[p].abs(),
        half_height_duration(&u, p, dt),
        regression_slope(&ts, uw),
        mean(uw),
        mean(&gam),
        mean(&b),
        mean(&g),
        mean(&b),
        int_g,
        int_b,
        sign * int_g,
        sign * int_b,
        rel_g,
        rel_b,
        u[m1],
        h1[0],
        h1[1],
    ];
    Ok(FeatureRow { values, degenerate })
}

fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den != 0.0 && den.is_finite() {
        num / den
    } else {
        *degenerate = true;
        0.0
    }
}

/// The 29 topographic features, in order. Family energies sum `|φ_k|²` over
/// the listed wavevectors in `𝒦′` only.
pub fn features_topographic(
    event: &EventRecord,
    traj: &Trajectory,
    model: &TopographicModel,
) -> Result<FeatureRow, String> {
    let dt = traj.dt;
    let p = event.peak_index;
    let n = traj.len();
    if traj.hidden_truth.is_none() {
        return Err("topographic features need the simulated modes".into());
    }
    let clip = |what: &str| format!("{what} window clipped by the trajectory");
    let pre = window(p, dt, -1.0, -0.3, n).ok_or_else(|| clip("pre"))?;
    let short = window(p, dt, -0.3, -0.1, n).ok_or_else(|| clip("short pre"))?;
    window(p, dt, -0.1, 0.1, n).ok_or_else(|| clip("peak"))?;
    let post = window(p, dt, 0.2, 1.0, n).ok_or_else(|| clip("post"))?;

    let v = traj.obs_series(0);
    let t = traj.times();
    let slope = |(a, b): (usize, usize)| regression_slope(&t[a..=b], &v[a..=b]);
    let y = |i: usize| traj.hidden_at(i).expect("hidden truth present");
    let family = |i: usize, ks: &[Wavevector]| ks.iter().map(|&k| model.modal_energy(y(i), k)).sum::<f64>();
    let over_pre = |f: &dyn Fn(usize) -> f64| (pre.0..=pre.1).map(f).collect::<Vec<f64>>();
    let re = |i: usize, k: Wavevector| model.mode(y(i), k).map_or(0.0, |z| z.re);

    let e_tot = over_pre(&|i| model.total_energy(y(i)));
    let e_up = over_pre(&|i| family(i, &UPPER));
    let e_zo = over_pre(&|i| family(i, &ZONAL));
    let e_lo = over_pre(&|i| family(i, &LOWER));
    let e_me = over_pre(&|i| family(i, &MERIDIONAL));
    let (up, zo, lo) = (mean(&e_up), mean(&e_zo), mean(&e_lo));
    let mut degenerate = false;
    let r1 = ratio(up, lo, &mut degenerate);
    let r2 = ratio(zo, up + lo, &mut degenerate);
    let r3 = ratio(up - lo, up + lo, &mut degenerate);
    let v_pre = &v[pre.0..=pre.1];
    let v_post = &v[post.0..=post.1];
    let pre_re = |k: Wavevector| mean(&over_pre(&|i| re(i, k)));

    let values = vec![
        v[p],
        v[p].abs(),
        slope(short),
        slope(pre),
        slope(post),
        pop_std(v_pre),
        mean(v_pre),
        mean(v_post),
        model.total_energy(y(p)),
        mean(&e_tot),
        max(&e_tot),
        up,
        zo,
        lo,
        mean(&e_me),
        max(&e_up),
        max(&e_zo),
        max(&e_lo),
        r1,
        r2,
        r3,
        pre_re([1, 1]),
        pre_re([2, 1]),
        pre_re([1, 0]),
        pre_re([1, -1]),
        pre_re([2, -1]),
        re(p, [1, 1]),
        re(p, [1, 0]),
        re(p, [1, -1]),
    ];
    Ok(FeatureRow { values, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_topographic_model, TopographicParams};

    fn event(p: usize, amp: f64) -> EventRecord {
        EventRecord {
            peak_index: p,
            peak_time: 0.0,
            amplitude: amp,
            sign: if amp >= 0.0 { 1 } else { -1 },
            threshold_used: 0.0,
            window_pre: (0, p),
            window_post: (p, p),
        }
    }

    fn df_traj(u: Vec<f64>, gamma: f64, b: f64, dt: f64) -> Trajectory {
        let n = u.len();
        let hidden: Vec<f64> = (0..n).flat_map(|_| [gamma, b]).collect();
        Trajectory::new(dt, 0.0, 1, u, 0).unwrap().with_hidden(2, hidden).unwrap()
    }

    #[test]
    fn constant_forcing_integral() {
        let dt = 0.01;
        let u: Vec<f64> = (0..400).map(|i| if i == 300 { 3.0 } else { 1.0 }).collect();
        let p = DampingForcingParams::standard();
        let row =
            features_damping_forcing(&event(300, 3.0), &df_traj(u, 0.0, 1.0, dt), &p, HiddenSource::Truth).unwrap();
        assert!((row.values[10] - 1.5).abs() < 1e-12);
        assert!((row.values[12] - 1.5).abs() < 1e-12);
        assert_eq!(row.values.len(), 18);
    }

    #[test]
    fn exact_cancellation() {
        let p = DampingForcingParams::standard();
        let u: Vec<f64> = (0..400).map(|i| 1.0 + (i as f64 * 0.01).sin()).collect();
        let row =
            features_damping_forcing(&event(300, u[300]), &df_traj(u, p.d_u / p.c, 0.5, 0.01), &p, HiddenSource::Truth)
                .unwrap();
        assert!(row.values[7].abs() < 1e-12);
        assert!(row.values[13].abs() < 1e-12 && (row.values[14] - 1.0).abs() < 1e-12);
        let zero = features_damping_forcing(
            &event(300, 1.0),
            &df_traj(vec![1.0; 400], p.d_u / p.c, 0.0, 0.01),
            &p,
            HiddenSource::Truth,
        )
        .unwrap();
        assert!(zero.degenerate);
    }

    #[test]
    fn triangular_pulse_duration() {
        let dt = 0.01;
        let w = 0.37;
        let s: Vec<f64> = (0..300)
            .map(|i| {
                let x = (i as f64 - 150.0) * dt;
                (2.0 - 2.0 * x.abs() / w).max(0.0)
            })
            .collect();
        assert!((half_height_duration(&s, 150, dt) - w).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((half_height_duration(&neg, 150, dt) - w).abs() < 1e-12);
    }

    #[test]
    fn clipped_window_excluded() {
        let p = DampingForcingParams::standard();
        assert!(features_damping_forcing(
            &event(100, 1.0),
            &df_traj(vec![0.0; 400], 0.0, 0.0, 0.01),
            &p,
            HiddenSource::Truth
        )
        .is_err());
    }

    fn topo_traj(
        model: &TopographicModel,
        n: usize,
        dt: f64,
        v: impl Fn(f64) -> f64,
        excite: &[(Wavevector, f64)],
    ) -> Trajectory {
        let mut y = vec![0.0; 2 * model.n_modes()];
        for &(k, a) in excite {
            y[2 * model.mode_index(k).unwrap()] = a;
        }
        let obs: Vec<f64> = (0..n).map(|i| v(i as f64 * dt)).collect();
        Trajectory::new(dt, 0.0, 1, obs, 0).unwrap().with_hidden(y.len(), y.repeat(n)).unwrap()
    }

    #[test]
    fn one_hot_energy() {
        let m = build_topographic_model(TopographicParams::standard()).unwrap();
        let tr = topo_traj(&m, 400, 0.01, |_| 0.0, &[([1, 0], 1.0)]);
        let row = features_topographic(&event(200, 0.0), &tr, &m).unwrap();
        assert_eq!(row.values.len(), 29);
        assert_eq!(row.values[8], 1.0);
        assert_eq!(row.values[12], 1.0);
        assert!(row.degenerate);
        assert_eq!(row.values[19], 0.0);
    }

    #[test]
    fn balanced_diagonals_and_slope() {
        let m = build_topographic_model(TopographicParams::standard()).unwrap();
        let tr = topo_traj(&m, 400, 0.01, |t| 2.0 * t, &[([1, 1], 0.5), ([1, -1], 0.5)]);
        let row = features_topographic(&event(200, 4.0), &tr, &m).unwrap();
        assert!((row.values[18] - 1.0).abs() < 1e-15);
        assert!(row.values[20].abs() < 1e-15);
        assert!((row.values[3] - 2.0).abs() < 1e-10);
        assert!(!row.degenerate);
    }
}
