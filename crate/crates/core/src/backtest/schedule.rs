use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One refit: the model is trained on `train_start..pred_start` and used for
/// `pred_start..pred_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub train_start: usize,
    pub pred_start: usize,
    pub pred_end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.pred_end - self.pred_start
    }

    pub fn is_empty(&self) -> bool {
        self.pred_end == self.pred_start
    }

    /// First date of the trailing calibration span (the last `calibration` training dates).
    pub fn calibration_start(&self, calibration: usize) -> usize {
        self.pred_start.saturating_sub(calibration).max(self.train_start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub train_len: usize,
    pub step: usize,
    pub segments: Vec<Segment>,
}

impl Schedule {
    pub fn first_prediction(&self) -> usize {
        self.train_len
    }

    pub fn end(&self) -> usize {
        self.segments.last().map_or(self.train_len, |s| s.pred_end)
    }

    pub fn segment_for(&self, t: usize) -> Option<&Segment> {
        if t < self.train_len {
            return None;
        }
        self.segments.get((t - self.train_len) / self.step)
    }
}

/// Refit points at `train_len, train_len + step, ...`; the last span may be shorter.
///
/// Refit positions depend only on `train_len` and `step`, never on the panel length, so a
/// truncated panel reproduces the same segments up to its end.
pub fn build_schedule(n_dates: usize, train_len: usize, step: usize) -> Result<Schedule> {
    if step == 0 || train_len == 0 {
        return Err(Error::Schedule("window lengths must be positive".into()));
    }
    if n_dates <= train_len {
        return Err(Error::Schedule(format!(
            "{n_dates} dates leave no prediction date after a {train_len}-day training window"
        )));
    }
    let mut segments = Vec::new();
    let mut start = train_len;
    while start < n_dates {
        let end = (start + step).min(n_dates);
        segments.push(Segment {
            index: segments.len(),
            train_start: start - train_len,
            pred_start: start,
            pred_end: end,
        });
        start = end;
    }
    Ok(Schedule {
        train_len,
        step,
        segments,
    })
}
