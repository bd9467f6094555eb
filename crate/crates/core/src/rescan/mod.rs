//! Raster-scan timing, and re-sampling of transient sequences between the
//! depth-camera rate and the scan rate.
//!
//! Both directions copy whole transient columns; nothing is interpolated.

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volumes::{FrameSequence, GridSpec, TransientImage};

/// Slack for float comparisons on absolute times, in seconds.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanOrder {
    /// Rows along y, x fastest.
    #[default]
    RowMajor,
    /// As `RowMajor` with odd rows scanned in reverse x.
    Serpentine,
}

impl std::str::FromStr for ScanOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rowmajor" | "row_major" | "row-major" => Ok(ScanOrder::RowMajor),
            "serpentine" => Ok(ScanOrder::Serpentine),
            other => Err(Error::param("order", format!("unknown scan order `{other}`"))),
        }
    }
}

/// When each wall point is measured within one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RasterSchedule {
    grid: GridSpec,
    scan_rate_hz: f64,
    order: ScanOrder,
    dwell_s: f64,
    /// Wall points in visiting order.
    visits: Vec<(usize, usize)>,
    #[serde(skip)]
    offsets: Array2<f64>,
}

pub fn build_schedule(grid: &GridSpec, scan_rate_hz: f64, order: ScanOrder) -> Result<RasterSchedule> {
    grid.validate()?;
    if !(scan_rate_hz.is_finite() && scan_rate_hz > 0.0) {
        return Err(Error::param("scan_rate", format!("{scan_rate_hz} must be > 0")));
    }
    let dwell_s = 1.0 / (scan_rate_hz * (grid.nx * grid.ny) as f64);
    let mut visits = Vec::with_capacity(grid.nx * grid.ny);
    for y in 0..grid.ny {
        let reverse = order == ScanOrder::Serpentine && y % 2 == 1;
        for i in 0..grid.nx {
            let x = if reverse { grid.nx - 1 - i } else { i };
            visits.push((x, y));
        }
    }
    let mut offsets = Array2::zeros((grid.nx, grid.ny));
    for (n, &(x, y)) in visits.iter().enumerate() {
        offsets[[x, y]] = n as f64 * dwell_s;
    }
    Ok(RasterSchedule {
        grid: *grid,
        scan_rate_hz,
        order,
        dwell_s,
        visits,
        offsets,
    })
}

impl RasterSchedule {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn scan_rate_hz(&self) -> f64 {
        self.scan_rate_hz
    }

    pub fn order(&self) -> ScanOrder {
        self.order
    }

    pub fn dwell_s(&self) -> f64 {
        self.dwell_s
    }

    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.scan_rate_hz
    }

    pub fn visits(&self) -> &[(usize, usize)] {
        &self.visits
    }

    /// Scan time of wall point `(x, y)` relative to the frame start.
    pub fn offset(&self, x: usize, y: usize) -> f64 {
        self.offsets[[x, y]]
    }

    pub fn offsets(&self) -> &Array2<f64> {
        &self.offsets
    }

    fn check_frames(&self, seq: &FrameSequence) -> Result<()> {
        if let Some(f) = seq.frames().first() {
            let g = f.grid();
            if (g.nx, g.ny) != (self.grid.nx, self.grid.ny) {
                return Err(Error::Shape {
                    expected: vec![self.grid.nx, self.grid.ny],
                    actual: vec![g.nx, g.ny],
                });
            }
        }
        Ok(())
    }
}

/// Assemble a frame whose column `(x, y)` is copied from `frames[pick(x, y)]`.
fn assemble(
    frames: &[TransientImage],
    nx: usize,
    ny: usize,
    t_start: f64,
    pick: impl Fn(usize, usize) -> usize,
) -> TransientImage {
    let first = &frames[0];
    let mut data = Array3::zeros(first.data().dim());
    for x in 0..nx {
        for y in 0..ny {
            data.slice_mut(s![x, y, ..])
                .assign(&frames[pick(x, y)].data().slice(s![x, y, ..]));
        }
    }
    TransientImage::new(*first.grid(), data, t_start).expect("columns copied from valid frames")
}

/// Simulate raster acquisition of a high-rate sequence: output frame `k`
/// starts at `t0 + k/scan_rate` and takes each column from the input frame
/// active when that point is scanned.
pub fn downsample_to_scan_rate(hi: &FrameSequence, sched: &RasterSchedule) -> Result<FrameSequence> {
    sched.check_frames(hi)?;
    let (t0, end) = match (hi.start_time(), hi.end_time()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Coverage {
                start: 0.0,
                end: sched.frame_period_s(),
            })
        }
    };
    let hi_rate = hi.rate_hz();
    let period = sched.frame_period_s();
    let count = ((end - t0) * sched.scan_rate_hz + TIME_EPS).floor() as usize;
    if count == 0 {
        return Err(Error::Coverage {
            start: t0,
            end: t0 + period,
        });
    }
    let n = hi.len();
    let g = sched.grid;
    let frames = (0..count)
        .map(|k| {
            let rel = k as f64 * period;
            let index = |x: usize, y: usize| {
                ((rel + sched.offset(x, y)) * hi_rate + TIME_EPS).floor() as usize
            };
            if let Some(&(x, y)) = sched.visits.iter().find(|&&(x, y)| index(x, y) >= n) {
                let t = t0 + rel + sched.offset(x, y);
                return Err(Error::Coverage {
                    start: t,
                    end: t + sched.dwell_s,
                });
            }
            Ok(assemble(hi.frames(), g.nx, g.ny, t0 + rel, index))
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, sched.scan_rate_hz)
}

/// Re-time a scan-rate sequence at `out_rate_hz`: output frame `j` covers
/// `[t0 + j/out_rate, t0 + j/out_rate + 1/scan_rate)` and takes each column
/// from the capture that scanned that point inside the span. The output
/// stops at the last fully covered frame.
pub fn upsample_to_policy_rate(
    lo: &FrameSequence,
    sched: &RasterSchedule,
    out_rate_hz: f64,
) -> Result<FrameSequence> {
    sched.check_frames(lo)?;
    if !(out_rate_hz.is_finite() && out_rate_hz > 0.0) {
        return Err(Error::param("out_rate", format!("{out_rate_hz} must be > 0")));
    }
    let t0 = lo
        .start_time()
        .ok_or_else(|| Error::InvalidData("cannot upsample an empty sequence".into()))?;
    let rate = sched.scan_rate_hz;
    if (lo.rate_hz() - rate).abs() > 1e-9 * rate {
        return Err(Error::param(
            "rate",
            format!("sequence rate {} Hz differs from scan rate {rate} Hz", lo.rate_hz()),
        ));
    }
    let n = lo.len();
    let count = (((n - 1) as f64) * out_rate_hz / rate + TIME_EPS).floor() as usize + 1;
    let g = sched.grid;
    let frames = (0..count)
        .map(|j| {
            let rel = j as f64 / out_rate_hz;
            // Capture k scans (x, y) at k/rate + offset; pick the one in span.
            let pick = |x: usize, y: usize| {
                let k = ((rel - sched.offset(x, y)) * rate - TIME_EPS).ceil().max(0.0) as usize;
                k.min(n - 1)
            };
            assemble(lo.frames(), g.nx, g.ny, t0 + rel, pick)
        })
        .collect();
    FrameSequence::new(frames, out_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, n, 4, 4, 1.0, 0.25e-9).unwrap()
    }

    /// Frame whose every voxel holds `value`.
    fn flat(g: GridSpec, value: f32) -> TransientImage {
        TransientImage::new(g, Array3::from_elem(g.transient_shape(), value), 0.0).unwrap()
    }

    fn tagged(g: GridSpec, count: usize, rate: f64) -> FrameSequence {
        let frames = (0..count).map(|i| flat(g, i as f32)).collect();
        FrameSequence::from_volumes(frames, rate, 0.0).unwrap()
    }

    #[test]
    fn dwell_for_32x32_at_4hz() {
        let s = build_schedule(&grid(32), 4.0, ScanOrder::RowMajor).unwrap();
        assert_eq!(s.dwell_s(), 1.0 / 4096.0);
        assert!((s.dwell_s() - 244.14e-6).abs() < 1e-8);
        assert!(build_schedule(&grid(32), 0.0, ScanOrder::RowMajor).is_err());
    }

    #[test]
    fn two_by_two_row_major_offsets() {
        let s = build_schedule(&grid(2), 1.0, ScanOrder::RowMajor).unwrap();
        assert_eq!(s.offset(0, 0), 0.0);
        assert_eq!(s.offset(1, 0), 0.25);
        assert_eq!(s.offset(0, 1), 0.5);
        assert_eq!(s.offset(1, 1), 0.75);
    }

    #[test]
    fn serpentine_reverses_second_row() {
        let s = build_schedule(&grid(2), 1.0, ScanOrder::Serpentine).unwrap();
        assert_eq!(s.visits(), &[(0, 0), (1, 0), (1, 1), (0, 1)]);
        assert_eq!("Serpentine".parse::<ScanOrder>().unwrap(), ScanOrder::Serpentine);
        assert!("spiral".parse::<ScanOrder>().is_err());
    }

    #[test]
    fn static_scene_is_a_fixed_point() {
        let g = grid(8);
        let frames = (0..30).map(|_| flat(g, 3.5)).collect();
        let hi = FrameSequence::from_volumes(frames, 30.0, 0.0).unwrap();
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        let lo = downsample_to_scan_rate(&hi, &s).unwrap();
        assert_eq!(lo.len(), 4);
        assert!(lo.frames().iter().all(|f| f.data() == hi.frames()[0].data()));
        let back = upsample_to_policy_rate(&lo, &s, 30.0).unwrap();
        assert!(back.frames().iter().all(|f| f.data() == hi.frames()[0].data()));
    }

    #[test]
    fn jump_lands_on_first_point_scanned_after_it() {
        let g = grid(32);
        // 40 Hz input: frame 5 starts exactly at 0.125 s.
        let frames = (0..40).map(|i| flat(g, if i < 5 { 0.0 } else { 1.0 })).collect();
        let hi = FrameSequence::from_volumes(frames, 40.0, 0.0).unwrap();
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        let lo = downsample_to_scan_rate(&hi, &s).unwrap();
        let f0 = &lo.frames()[0];
        let first = s
            .visits()
            .iter()
            .position(|&(x, y)| s.offset(x, y) >= 0.125)
            .unwrap();
        assert_eq!(s.visits()[first], (0, 16));
        for (n, &(x, y)) in s.visits().iter().enumerate() {
            let want = if n < first { 0.0 } else { 1.0 };
            assert_eq!(f0.data()[[x, y, 0]], want, "point {n}");
        }
    }

    #[test]
    fn thirty_hz_second_gives_four_frames() {
        let g = grid(4);
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        let lo = downsample_to_scan_rate(&tagged(g, 30, 30.0), &s).unwrap();
        assert_eq!(lo.len(), 4);
        let starts: Vec<_> = lo.frames().iter().map(|f| f.t_start()).collect();
        assert_eq!(starts, vec![0.0, 0.25, 0.5, 0.75]);
        assert_eq!(lo.rate_hz(), 4.0);
    }

    #[test]
    fn short_input_reports_missing_interval() {
        let g = grid(4);
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        match downsample_to_scan_rate(&tagged(g, 5, 30.0), &s) {
            Err(Error::Coverage { start, end }) => {
                assert_eq!(start, 0.0);
                assert_eq!(end, 0.25);
            }
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn four_captures_give_twenty_three_frames() {
        let g = grid(4);
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        let up = upsample_to_policy_rate(&tagged(g, 4, 4.0), &s, 30.0).unwrap();
        assert_eq!(up.len(), 23);
        assert_eq!(up.rate_hz(), 30.0);
        assert!((up.frames()[22].t_start() - 22.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn upsampled_columns_were_scanned_inside_their_span() {
        let g = grid(4);
        let s = build_schedule(&g, 4.0, ScanOrder::Serpentine).unwrap();
        let up = upsample_to_policy_rate(&tagged(g, 6, 4.0), &s, 30.0).unwrap();
        for (j, f) in up.frames().iter().enumerate() {
            let a = j as f64 / 30.0;
            for x in 0..4 {
                for y in 0..4 {
                    let k = f64::from(f.data()[[x, y, 0]]);
                    let t = k / 4.0 + s.offset(x, y);
                    assert!(t >= a - 1e-9 && t < a + 0.25 - 1e-12, "j={j} ({x},{y}) t={t}");
                }
            }
        }
    }

    #[test]
    fn rate_mismatch_and_empty_input_rejected() {
        let g = grid(4);
        let s = build_schedule(&g, 4.0, ScanOrder::RowMajor).unwrap();
        assert!(upsample_to_policy_rate(&tagged(g, 4, 5.0), &s, 30.0).is_err());
        let empty = FrameSequence::new(vec![], 4.0).unwrap();
        assert!(upsample_to_policy_rate(&empty, &s, 30.0).is_err());
        assert!(downsample_to_scan_rate(&FrameSequence::new(vec![], 30.0).unwrap(), &s).is_err());
    }

    fn random_sequence(g: GridSpec, count: usize, rate: f64, values: &[f32]) -> FrameSequence {
        let frames = (0..count)
            .map(|f| {
                let data = Array3::from_shape_fn(g.transient_shape(), |(x, y, t)| {
                    values[(f * 131 + x * 17 + y * 7 + t) % values.len()]
                });
                TransientImage::new(g, data, 0.0).unwrap()
            })
            .collect();
        FrameSequence::from_volumes(frames, rate, 0.0).unwrap()
    }

    fn column(f: &TransientImage, x: usize, y: usize) -> Vec<f32> {
        f.data().slice(s![x, y, ..]).to_vec()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn down_then_up_copies_columns_verbatim(
            values in prop::collection::vec(0.0f32..100.0, 7..40),
            seconds in 1usize..3,
            serpentine in any::<bool>(),
        ) {
            let g = grid(4);
            let order = if serpentine { ScanOrder::Serpentine } else { ScanOrder::RowMajor };
            let s = build_schedule(&g, 4.0, order).unwrap();
            let hi = random_sequence(g, 30 * seconds, 30.0, &values);
            let lo = downsample_to_scan_rate(&hi, &s).unwrap();
            prop_assert_eq!(lo.len(), 4 * seconds);
            for (k, f) in lo.frames().iter().enumerate() {
                for x in 0..4 {
                    for y in 0..4 {
                        let t = k as f64 / 4.0 + s.offset(x, y);
                        let src = (t * 30.0 + 1e-9).floor() as usize;
                        prop_assert_eq!(column(f, x, y), column(&hi.frames()[src], x, y));
                    }
                }
            }
            let up = upsample_to_policy_rate(&lo, &s, 30.0).unwrap();
            for (j, f) in up.frames().iter().enumerate() {
                // Frames whose span starts on a capture boundary restore it.
                if (j * 4) % 30 == 0 {
                    prop_assert_eq!(f.data(), lo.frames()[j * 4 / 30].data());
                }
                for x in 0..4 {
                    for y in 0..4 {
                        let col = column(f, x, y);
                        prop_assert!(lo.frames().iter().any(|l| column(l, x, y) == col));
                    }
                }
            }
        }
    }
}
