//! Causal stage classifier and overtreatment alarm.
//!
//! Each new sample yields two local statistics over the trailing
//! `trend_window`: the least-squares slope of the smoothed amplitude and the
//! std of raw amplitudes about the local line. Per-sample evidence is
//!
//! - oscillation: residual std above `oscillation_std_threshold`, or the slope
//!   inside `±slope_flat_band`, unless the amplitude is still falling steeply
//!   (slope below `-slope_fall_threshold`);
//! - renewed decline: slope below `-slope_flat_band` with the residual std back
//!   under the oscillation threshold.
//!
//! A→B requires oscillation evidence held for `stage_hold` seconds, B→C
//! requires renewed-decline evidence held for `stage_hold`. Transitions never
//! reverse. The reported onset (`since`, [`Transition::at`]) is the first
//! sample of the held run moved back by the estimator's group delay, half the
//! trend window plus half the smoothing span.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::series::{moving_average, AmplitudeSeries};
use crate::dsp::AmplitudeSample;
use crate::error::{Error, Result};
use crate::tissue::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Moving-average length, samples.
    pub smoothing_window: usize,
    /// V/s
    pub slope_fall_threshold: f64,
    /// V/s
    pub slope_flat_band: f64,
    /// V
    pub oscillation_std_threshold: f64,
    /// s
    pub stage_hold: f64,
    /// s
    pub alarm_hold: f64,
    /// Span of the local slope / residual-std estimate, s.
    pub trend_window: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            smoothing_window: 7,
            slope_fall_threshold: 0.02,
            slope_flat_band: 0.005,
            oscillation_std_threshold: 0.06,
            stage_hold: 4.0,
            alarm_hold: 10.0,
            trend_window: 5.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.slope_fall_threshold,
            self.slope_flat_band,
            self.oscillation_std_threshold,
            self.stage_hold,
            self.alarm_hold,
            self.trend_window,
        ];
        if self.smoothing_window == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("monitor thresholds must be positive".into()));
        }
        if self.slope_flat_band >= self.slope_fall_threshold {
            return Err(Error::Config(
                "slope_flat_band must be below slope_fall_threshold".into(),
            ));
        }
        Ok(())
    }
}

/// Classifier output label; `Insufficient` until enough samples arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    #[serde(rename = "insufficient")]
    Insufficient,
    #[serde(rename = "A")]
    Scattering,
    #[serde(rename = "B")]
    Oscillation,
    #[serde(rename = "C")]
    Scorched,
}

impl StageLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::Insufficient => "insufficient",
            StageLabel::Scattering => "A",
            StageLabel::Oscillation => "B",
            StageLabel::Scorched => "C",
        }
    }

    pub fn stage(self) -> Option<Stage> {
        match self {
            StageLabel::Insufficient => None,
            StageLabel::Scattering => Some(Stage::Scattering),
            StageLabel::Oscillation => Some(Stage::Oscillation),
            StageLabel::Scorched => Some(Stage::Scorched),
        }
    }
}

impl std::str::FromStr for StageLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "insufficient" => StageLabel::Insufficient,
            "A" => StageLabel::Scattering,
            "B" => StageLabel::Oscillation,
            "C" => StageLabel::Scorched,
            other => return Err(Error::invalid(format!("unknown stage label {other:?}"))),
        })
    }
}

impl From<Stage> for StageLabel {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Scattering => StageLabel::Scattering,
            Stage::Oscillation => StageLabel::Oscillation,
            Stage::Scorched => StageLabel::Scorched,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageEstimate {
    pub stage: StageLabel,
    /// Irradiation time at which the current stage began, s.
    pub since: f64,
    /// Fraction of the last `stage_hold` seconds whose evidence agrees with `stage`.
    pub confidence: f64,
    /// V/s
    pub slope: f64,
    /// V
    pub rolling_std: f64,
}

impl StageEstimate {
    pub fn insufficient() -> Self {
        Self {
            stage: StageLabel::Insufficient,
            since: 0.0,
            confidence: 0.0,
            slope: 0.0,
            rolling_std: 0.0,
        }
    }
}

/// A confirmed stage change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: StageLabel,
    pub to: StageLabel,
    /// Estimated onset of the change, s.
    pub at: f64,
    /// Time of the sample that confirmed it, s.
    pub confirmed_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Evidence {
    time: f64,
    oscillating: bool,
    declining: bool,
}

/// Incremental classifier; feeding samples one at a time is equivalent to
/// [`classify_stage`] on the whole series.
#[derive(Debug, Clone)]
pub struct StageClassifier {
    cfg: MonitorConfig,
    raw: VecDeque<(f64, f64)>,
    smoothed: VecDeque<(f64, f64)>,
    recent: VecDeque<Evidence>,
    count: usize,
    stage: StageLabel,
    since: f64,
    run_start: Option<f64>,
    /// Group delay of the smoothed-slope estimator when the current run began.
    run_lag: f64,
    estimate: StageEstimate,
    transitions: Vec<Transition>,
}

impl StageClassifier {
    pub fn new(cfg: MonitorConfig) -> Self {
        Self {
            cfg,
            raw: VecDeque::new(),
            smoothed: VecDeque::new(),
            recent: VecDeque::new(),
            count: 0,
            stage: StageLabel::Insufficient,
            since: 0.0,
            run_start: None,
            run_lag: 0.0,
            estimate: StageEstimate::insufficient(),
            transitions: Vec::new(),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn estimate(&self) -> StageEstimate {
        self.estimate
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn push(&mut self, sample: &AmplitudeSample) -> StageEstimate {
        let t = sample.irradiation_time;
        let w = self.cfg.smoothing_window;
        self.count += 1;
        self.raw.push_back((t, sample.amplitude));
        // Keep enough raw history for both the moving average and the trend window.
        while self.raw.len() > w
            && self.raw.front().is_some_and(|&(t0, _)| t0 <= t - self.cfg.trend_window)
        {
            self.raw.pop_front();
        }
        if self.count < w {
            self.estimate = StageEstimate::insufficient();
            return self.estimate;
        }
        let n = self.raw.len();
        let lag = 0.5 * (self.cfg.trend_window + (t - self.raw[n - w].0));
        let avg = self.raw.iter().skip(n - w).map(|p| p.1).sum::<f64>() / w as f64;
        self.smoothed.push_back((t, avg));
        while self
            .smoothed
            .front()
            .is_some_and(|&(t0, _)| t0 <= t - self.cfg.trend_window)
        {
            self.smoothed.pop_front();
        }

        let slope = ols(self.smoothed.iter().copied()).map_or(0.0, |l| l.slope);
        let in_window = self
            .raw
            .iter()
            .copied()
            .filter(|&(t0, _)| t0 > t - self.cfg.trend_window);
        let rolling_std = residual_std(in_window);

        if self.stage == StageLabel::Insufficient {
            self.stage = StageLabel::Scattering;
            self.since = self.raw[n - w].0;
        }

        let oscillating = (rolling_std > self.cfg.oscillation_std_threshold
            || slope.abs() <= self.cfg.slope_flat_band)
            && slope >= -self.cfg.slope_fall_threshold;
        let declining =
            slope < -self.cfg.slope_flat_band && rolling_std <= self.cfg.oscillation_std_threshold;
        self.recent.push_back(Evidence {
            time: t,
            oscillating,
            declining,
        });
        while self
            .recent
            .front()
            .is_some_and(|e| e.time < t - self.cfg.stage_hold)
        {
            self.recent.pop_front();
        }

        let (next, wanted) = match self.stage {
            StageLabel::Scattering => (Some(StageLabel::Oscillation), oscillating),
            StageLabel::Oscillation => (Some(StageLabel::Scorched), declining),
            _ => (None, false),
        };
        if let Some(next) = next {
            if wanted {
                let start = *self.run_start.get_or_insert_with(|| {
                    self.run_lag = lag;
                    t
                });
                if t - start >= self.cfg.stage_hold {
                    // Onset estimate: the run start less the estimator's delay,
                    // never earlier than the current stage began.
                    let at = (start - self.run_lag).max(self.since);
                    self.transitions.push(Transition {
                        from: self.stage,
                        to: next,
                        at,
                        confirmed_at: t,
                    });
                    self.stage = next;
                    self.since = at;
                    self.run_start = None;
                }
            } else {
                self.run_start = None;
            }
        }

        let agree = self
            .recent
            .iter()
            .filter(|e| match self.stage {
                StageLabel::Oscillation => e.oscillating,
                StageLabel::Scorched => e.declining,
                _ => !e.oscillating,
            })
            .count();
        self.estimate = StageEstimate {
            stage: self.stage,
            since: self.since,
            confidence: agree as f64 / self.recent.len().max(1) as f64,
            slope,
            rolling_std,
        };
        self.estimate
    }
}

/// Batch classification of a whole series.
pub fn classify_stage(series: &AmplitudeSeries, cfg: &MonitorConfig) -> StageEstimate {
    let mut c = StageClassifier::new(*cfg);
    let mut est = StageEstimate::insufficient();
    for s in series.samples() {
        est = c.push(s);
    }
    est
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Line {
    pub slope: f64,
    pub intercept: f64,
}

pub(crate) fn ols(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<Line> {
    let n = points.clone().count();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let (st, sy) = points.clone().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / nf, sy / nf);
    let (sxx, sxy) = points.fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (t - mt), b + (t - mt) * (y - my))
    });
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(Line {
        slope,
        intercept: my - slope * mt,
    })
}

fn residual_std(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let Some(line) = ols(points.clone()) else {
        return 0.0;
    };
    let n = points.clone().count();
    if n < 3 {
        return 0.0;
    }
    let ss: f64 = points
        .map(|(t, y)| (y - line.intercept - line.slope * t).powi(2))
        .sum();
    (ss / (n - 2) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlarmReason {
    ScorchOnset,
    ProlongedScorch,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Alarm {
    pub active: bool,
    pub raised_at: Option<f64>,
    pub reason: Option<AlarmReason>,
}

/// Next alarm state given the previous one, the latest estimate and the
/// current irradiation time. Once active the alarm stays active.
pub fn overtreatment_alarm(
    previous: &Alarm,
    est: &StageEstimate,
    now: f64,
    cfg: &MonitorConfig,
) -> Alarm {
    if est.stage != StageLabel::Scorched {
        return *previous;
    }
    let mut alarm = *previous;
    if !alarm.active {
        alarm = Alarm {
            active: true,
            raised_at: Some(now),
            reason: Some(AlarmReason::ScorchOnset),
        };
    }
    if now - est.since >= cfg.alarm_hold {
        alarm.reason = Some(AlarmReason::ProlongedScorch);
    }
    alarm
}

/// True when every smoothed amplitude lies inside `band` and the smoothed
/// trend does not rise faster than `slope_flat_band`.
pub fn baseline_check(series: &AmplitudeSeries, band: [f64; 2], cfg: &MonitorConfig) -> bool {
    let w = cfg.smoothing_window;
    if series.len() < w {
        return false;
    }
    let smoothed = moving_average(&series.amplitudes().collect::<Vec<_>>(), w);
    if smoothed.iter().any(|v| *v < band[0] || *v > band[1]) {
        return false;
    }
    let times: Vec<f64> = series.times().skip(w - 1).collect();
    let slope = ols(times.iter().copied().zip(smoothed.iter().copied())).map_or(0.0, |l| l.slope);
    slope <= cfg.slope_flat_band
}
