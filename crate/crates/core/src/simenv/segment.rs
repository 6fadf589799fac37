use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SyntheticWorld;
use crate::config::PreprocessConfig;

pub const FRAME_CAP_LADDER: [usize; 4] = [8, 6, 4, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMethod {
    Asr,
    Scene,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub caption: String,
    pub transcript: String,
    pub frame_times: Vec<f64>,
    pub method: SegmentMethod,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    /// Half-open membership; the caller treats the world's end time as
    /// part of the last segment.
    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t < self.t_end
    }
}

/// The next rung below `cap` on the 8/6/4/2 ladder, or `None` at the bottom.
pub fn degrade_cap(cap: usize) -> Option<usize> {
    FRAME_CAP_LADDER.iter().copied().find(|&c| c < cap)
}

/// `t_start + i * interval` strictly before `t_end` (the start alone for a
/// zero-length segment), then uniformly subsampled to `cap` keeping the
/// first and last.
pub fn sample_frames(t_start: f64, t_end: f64, interval: f64, cap: usize) -> Vec<f64> {
    assert!(interval > 0.0, "frame interval must be positive");
    let mut times = Vec::new();
    let mut i = 0u32;
    loop {
        let t = t_start + f64::from(i) * interval;
        if t >= t_end && !(i == 0 && t_end == t_start) {
            break;
        }
        times.push(t);
        if t_end == t_start {
            break;
        }
        i += 1;
    }
    let n = times.len();
    if cap == 0 {
        return Vec::new();
    }
    if n <= cap {
        return times;
    }
    if cap == 1 {
        return alloc::vec![times[0]];
    }
    (0..cap)
        .map(|j| {
            let idx = libm::round(j as f64 * (n - 1) as f64 / (cap - 1) as f64) as usize;
            times[idx]
        })
        .collect()
}

/// Tiles `[0, duration]` with segments of 15-45 s (hard cap 60).
///
/// Cut candidates are transcript-unit boundaries when the transcript covers
/// enough of the video, else event boundaries, else none (fixed 30 s cuts).
/// Each cut goes to the candidate nearest the next multiple of the target
/// length inside the preferred window, then inside the widened window, and
/// is forced at that multiple when no candidate qualifies.
pub fn segment_video(world: &SyntheticWorld, cfg: &PreprocessConfig) -> Vec<Segment> {
    let dur = world.duration;
    let (method, candidates) = if world.transcript_coverage() >= cfg.asr_min_coverage {
        let mut c: Vec<f64> = world
            .transcript_units
            .iter()
            .flat_map(|u| [u.t_start, u.t_end])
            .filter(|&t| 0.0 < t && t < dur)
            .collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        (SegmentMethod::Asr, c)
    } else {
        let b = world.event_boundaries();
        if b.is_empty() { (SegmentMethod::Fixed, b) } else { (SegmentMethod::Scene, b) }
    };

    let mut cuts = alloc::vec![0.0];
    let mut prev = 0.0;
    while dur - prev > cfg.max_segment {
        let lo = prev + cfg.min_segment;
        let hi = (prev + cfg.max_segment).min(dur - cfg.min_segment);
        let target = (libm::ceil(lo / cfg.target_segment) * cfg.target_segment).clamp(lo, hi);
        let nearest = |hi: f64| {
            candidates
                .iter()
                .copied()
                .filter(|&c| lo <= c && c <= hi)
                .min_by(|a, b| libm::fabs(a - target).total_cmp(&libm::fabs(b - target)).then(a.total_cmp(b)))
        };
        let wide = (prev + cfg.hard_cap).min(dur - cfg.min_segment);
        let cut = nearest(hi).or_else(|| nearest(wide)).unwrap_or(target);
        cuts.push(cut);
        prev = cut;
    }
    cuts.push(dur);

    cuts.windows(2)
        .enumerate()
        .map(|(id, w)| {
            let (s, e) = (w[0], w[1]);
            let last = id + 2 == cuts.len();
            let in_seg = |a: f64, b: f64| super::overlaps(a, b, s, e) || (last && a == b && a == e);
            let mut labels: Vec<&str> = Vec::new();
            for ev in world.events.iter().filter(|ev| in_seg(ev.t_start, ev.t_end)) {
                if !labels.contains(&ev.label.as_str()) {
                    labels.push(&ev.label);
                }
            }
            let texts: Vec<&str> = world
                .transcript_units
                .iter()
                .filter(|u| in_seg(u.t_start, u.t_end))
                .map(|u| u.text.as_str())
                .collect();
            Segment {
                id,
                t_start: s,
                t_end: e,
                caption: labels.join("; "),
                transcript: texts.join(" "),
                frame_times: sample_frames(s, e, cfg.frame_interval, cfg.frame_cap),
                method,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    #[test]
    fn frame_sampling() {
        assert_eq!(sample_frames(0.0, 30.0, 6.0, 8), [0.0, 6.0, 12.0, 18.0, 24.0]);
        let sixty = sample_frames(0.0, 60.0, 6.0, 8);
        assert_eq!(sixty.len(), 8);
        assert_eq!(sixty[0], 0.0);
        assert_eq!(*sixty.last().unwrap(), 54.0);
        assert_eq!(sample_frames(0.0, 60.0, 6.0, 2), [0.0, 54.0]);
        assert_eq!(sample_frames(5.0, 5.0, 6.0, 8), [5.0]);
        assert_eq!(degrade_cap(8), Some(6));
        assert_eq!(degrade_cap(2), None);
    }

    #[test]
    fn dense_transcript_gives_asr_segments() {
        let mut w = SyntheticWorld::new("w", 120.0);
        for i in 0..12 {
            let s = f64::from(i) * 10.0;
            w = w.with_unit(s, s + 10.0, "words");
        }
        let segs = segment_video(&w, &cfg());
        let bounds: Vec<(f64, f64)> = segs.iter().map(|s| (s.t_start, s.t_end)).collect();
        assert_eq!(bounds, [(0.0, 30.0), (30.0, 60.0), (60.0, 90.0), (90.0, 120.0)]);
        assert!(segs.iter().all(|s| s.method == SegmentMethod::Asr));
    }

    #[test]
    fn empty_world_uses_fixed_cuts() {
        let segs = segment_video(&SyntheticWorld::new("w", 100.0), &cfg());
        let bounds: Vec<(f64, f64)> = segs.iter().map(|s| (s.t_start, s.t_end)).collect();
        assert_eq!(bounds, [(0.0, 30.0), (30.0, 60.0), (60.0, 100.0)]);
        assert!(segs.iter().all(|s| s.method == SegmentMethod::Fixed));
    }

    #[test]
    fn short_world_is_one_segment() {
        let segs = segment_video(&SyntheticWorld::new("w", 10.0), &cfg());
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].t_start, segs[0].t_end), (0.0, 10.0));
    }

    #[test]
    fn scene_cuts_follow_event_boundaries() {
        let w = SyntheticWorld::new("w", 130.0).with_event("a", 0.0, 27.0).with_event("b", 27.0, 70.0);
        let segs = segment_video(&w, &cfg());
        assert_eq!(segs[0].method, SegmentMethod::Scene);
        assert_eq!(segs[0].t_end, 27.0);
        assert_eq!(segs[0].caption, "a");
    }
}
