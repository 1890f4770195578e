//! In-bounds counting and coverage calibration.

use serde::{Deserialize, Serialize};

use super::interval::PredictionInterval;
use crate::error::{check_len, Result, UqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InboundsMode {
    /// `center ± half_width`
    #[default]
    Symmetric,
    /// `[min(raw_lower, raw_upper), max(raw_lower, raw_upper)]`
    RawBounds,
}

fn covers(iv: &PredictionInterval, y: f64, mode: InboundsMode) -> Result<bool> {
    Ok(match mode {
        InboundsMode::Symmetric => y >= iv.lower() && y <= iv.upper(),
        InboundsMode::RawBounds => {
            let (Some(a), Some(b)) = (iv.raw_lower, iv.raw_upper) else {
                return Err(UqError::MissingRawBounds);
            };
            y >= a.min(b) && y <= a.max(b)
        }
    })
}

/// Per-interval coverage flags; bounds are inclusive.
pub fn inbounds_flags(
    intervals: &[PredictionInterval],
    observed: &[f64],
    mode: InboundsMode,
) -> Result<Vec<bool>> {
    check_len(intervals.len(), observed.len())?;
    intervals
        .iter()
        .zip(observed)
        .map(|(iv, &y)| covers(iv, y, mode))
        .collect()
}

/// Percentage of observations inside their interval.
pub fn inbounds_percentage(
    intervals: &[PredictionInterval],
    observed: &[f64],
    mode: InboundsMode,
) -> Result<f64> {
    if intervals.is_empty() && observed.is_empty() {
        return Err(UqError::EmptyInput);
    }
    let flags = inbounds_flags(intervals, observed, mode)?;
    Ok(100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

pub fn rescale(intervals: &[PredictionInterval], factor: f64) -> Vec<PredictionInterval> {
    intervals.iter().map(|iv| iv.scaled(factor)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    /// Symmetric in-bounds percentage after rescaling.
    pub inbounds_pct: f64,
    /// Every half width was zero, so no factor can move the coverage.
    pub all_zero_widths: bool,
}

/// Finds the factor `s > 0` whose rescaled symmetric coverage is closest to
/// `target_pct`.
///
/// Coverage is a step function of `s`: observation `i` is inside once
/// `s ≥ |y_i − c_i| / w_i`. Among the attainable coverage levels the one
/// nearest the target wins (the lower level on an exact tie), and `s` is the
/// smallest breakpoint that reaches it.
pub fn calibrate_scale(
    intervals: &[PredictionInterval],
    observed: &[f64],
    target_pct: f64,
) -> Result<Calibration> {
    check_len(intervals.len(), observed.len())?;
    if intervals.is_empty() {
        return Err(UqError::EmptyInput);
    }
    let n = intervals.len() as f64;
    let mut always = 0usize;
    let mut ratios = Vec::with_capacity(intervals.len());
    for (iv, &y) in intervals.iter().zip(observed) {
        let dist = (y - iv.center).abs();
        if iv.half_width > 0.0 {
            ratios.push(dist / iv.half_width);
        } else if dist == 0.0 {
            always += 1;
        }
    }
    if ratios.is_empty() {
        log::warn!("all half widths are zero; calibration leaves the scale at 1");
        return Ok(Calibration {
            scale: 1.0,
            inbounds_pct: inbounds_percentage(intervals, observed, InboundsMode::Symmetric)?,
            all_zero_widths: true,
        });
    }
    ratios.sort_by(f64::total_cmp);
    let m = ratios.len();

    // Attainable levels as (covered count, scale reaching it).
    let zeros = ratios.iter().take_while(|r| **r == 0.0).count();
    let mut levels = Vec::with_capacity(m + 1);
    levels.push((
        always + zeros,
        if zeros < m { ratios[zeros] / 2.0 } else { 1.0 },
    ));
    let mut i = zeros;
    while i < m {
        let v = ratios[i];
        while i < m && ratios[i] == v {
            i += 1;
        }
        if v.is_finite() {
            levels.push((always + i, v));
        }
    }
    let gap = |count: usize| (100.0 * count as f64 / n - target_pct).abs();
    let (count, mut scale) = levels
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, f64)>, cand| match best {
            Some(b) if gap(b.0) <= gap(cand.0) => Some(b),
            _ => Some(cand),
        })
        .expect("at least one level");

    // `|y − c| / w · w` can round below `|y − c|`; step up until the
    // interval test itself agrees.
    let covered_at = |s: f64| -> usize {
        intervals
            .iter()
            .zip(observed)
            .filter(|(iv, y)| {
                let w = iv.half_width * s;
                **y >= iv.center - w && **y <= iv.center + w
            })
            .count()
    };
    let mut steps = 0;
    while covered_at(scale) < count && steps < 64 {
        scale = scale.next_up();
        steps += 1;
    }
    let inbounds_pct = 100.0 * covered_at(scale) as f64 / n;
    Ok(Calibration {
        scale,
        inbounds_pct,
        all_zero_widths: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uq::Method;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(c: f64, w: f64) -> PredictionInterval {
        PredictionInterval::symmetric(c, w, Method::ThreeSplitL1)
    }

    #[test]
    fn infinite_and_zero_widths() {
        let ivs: Vec<_> = (0..5).map(|i| sym(i as f64, 1e18)).collect();
        let obs = [10.0, -3.0, 2.0, 7.0, 0.0];
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::Symmetric).unwrap(), 100.0);
        let ivs: Vec<_> = (0..5).map(|i| sym(i as f64, 0.0)).collect();
        let obs = [0.5, 1.5, 2.5, 3.5, 4.5];
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::Symmetric).unwrap(), 0.0);
    }

    #[test]
    fn hand_count() {
        let ivs: Vec<_> = (0..10).map(|_| sym(0.0, 1.0)).collect();
        let obs = [0.0, 1.0, -1.0, 0.5, -0.9, 1.01, 2.0, -3.0, 5.0, -1.5];
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::Symmetric).unwrap(), 50.0);
    }

    #[test]
    fn raw_bounds_mode() {
        let ivs = vec![
            PredictionInterval::from_quantiles(0.0, -1.0, 3.0),
            PredictionInterval::from_quantiles(0.0, 2.0, -2.0),
        ];
        // Symmetric: [−2, 2] and [−2, 2]; raw: [−1, 3] and [−2, 2].
        let obs = [2.5, -1.5];
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::RawBounds).unwrap(), 100.0);
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::Symmetric).unwrap(), 50.0);
        assert!(matches!(
            inbounds_percentage(&[sym(0.0, 1.0)], &[0.0], InboundsMode::RawBounds),
            Err(UqError::MissingRawBounds)
        ));
        assert!(matches!(
            inbounds_percentage(&[sym(0.0, 1.0)], &[0.0, 1.0], InboundsMode::Symmetric),
            Err(UqError::LengthMismatch { .. })
        ));
    }

    /// 25 unit intervals around 0; 17 observations at distance ≤ 1 with one
    /// exactly on the boundary, 8 beyond.
    fn at_68() -> (Vec<PredictionInterval>, Vec<f64>) {
        let ivs = (0..25).map(|_| sym(0.0, 1.0)).collect();
        let mut obs: Vec<f64> = (0..16).map(|i| i as f64 / 20.0).collect();
        obs.push(1.0);
        obs.extend((0..8).map(|i| 1.5 + i as f64));
        (ivs, obs)
    }

    #[test]
    fn already_calibrated_returns_one() {
        let (ivs, obs) = at_68();
        assert_eq!(inbounds_percentage(&ivs, &obs, InboundsMode::Symmetric).unwrap(), 68.0);
        let cal = calibrate_scale(&ivs, &obs, 68.0).unwrap();
        assert_eq!(cal.scale, 1.0);
        assert_eq!(cal.inbounds_pct, 68.0);
    }

    #[test]
    fn halved_widths_recover_factor_two() {
        let (ivs, obs) = at_68();
        let halved = rescale(&ivs, 0.5);
        let cal = calibrate_scale(&halved, &obs, 68.0).unwrap();
        assert!((cal.scale - 2.0).abs() < 1e-12);
        assert_eq!(cal.inbounds_pct, 68.0);
    }

    #[test]
    fn all_zero_widths_flagged() {
        let ivs = vec![sym(0.0, 0.0), sym(1.0, 0.0)];
        let cal = calibrate_scale(&ivs, &[0.0, 2.0], 68.0).unwrap();
        assert!(cal.all_zero_widths);
        assert_eq!(cal.scale, 1.0);
        assert_eq!(cal.inbounds_pct, 50.0);
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<PredictionInterval>, Vec<f64>) {
        let ivs = (0..n)
            .map(|_| sym(rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0)))
            .collect::<Vec<_>>();
        let obs = ivs
            .iter()
            .map(|iv| iv.center + rng.random_range(-3.0..3.0))
            .collect();
        (ivs, obs)
    }

    #[test]
    fn grid_never_beats_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.random_range(5..80);
            let (ivs, obs) = random_set(&mut rng, n);
            let cal = calibrate_scale(&ivs, &obs, 68.0).unwrap();
            let got = (cal.inbounds_pct - 68.0).abs();
            for k in 1..=1000 {
                let s = k as f64 * 0.01;
                let pct = inbounds_percentage(&rescale(&ivs, s), &obs, InboundsMode::Symmetric).unwrap();
                assert!((pct - 68.0).abs() >= got - 1e-9, "s={s} gives {pct}, calibrated {cal:?}");
            }
            let reapplied = inbounds_percentage(&rescale(&ivs, cal.scale), &obs, InboundsMode::Symmetric).unwrap();
            assert_eq!(reapplied, cal.inbounds_pct);
        }
    }

    proptest::proptest! {
        #[test]
        fn coverage_monotone_in_scale(seed in 0u64..500, s1 in 0.0f64..5.0, s2 in 0.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ivs, obs) = random_set(&mut rng, 30);
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let a = inbounds_percentage(&rescale(&ivs, lo), &obs, InboundsMode::Symmetric).unwrap();
            let b = inbounds_percentage(&rescale(&ivs, hi), &obs, InboundsMode::Symmetric).unwrap();
            proptest::prop_assert!(a <= b);
        }
    }
}
