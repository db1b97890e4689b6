//! Overlay quality metrics: width/height error and rectangle IoU, plus
//! per-DOF aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Rect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("ground-truth head box is degenerate ({w} x {h})")]
    DegenerateGroundTruth { w: f64, h: f64 },
    #[error("both rectangles have zero area")]
    BothEmpty,
    #[error("no rows to aggregate")]
    EmptyInput,
}

/// Rotation axis of an evaluation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DofLabel {
    Pitch,
    Yaw,
    Roll,
    #[default]
    Static,
}

impl DofLabel {
    pub const ALL: [DofLabel; 4] = [DofLabel::Pitch, DofLabel::Yaw, DofLabel::Roll, DofLabel::Static];

    pub fn as_str(&self) -> &'static str {
        match self {
            DofLabel::Pitch => "pitch",
            DofLabel::Yaw => "yaw",
            DofLabel::Roll => "roll",
            DofLabel::Static => "static",
        }
    }
}

impl fmt::Display for DofLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DofLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pitch" => Ok(DofLabel::Pitch),
            "yaw" => Ok(DofLabel::Yaw),
            "roll" => Ok(DofLabel::Roll),
            "static" => Ok(DofLabel::Static),
            other => Err(format!("unknown DOF label '{other}' (expected pitch, yaw, roll or static)")),
        }
    }
}

/// Model-to-head dimension comparison.
///
/// `ratio_*` is the model/head size ratio; `e_*_pct` is its deviation from a
/// perfect match in percent, `|ratio - 1| * 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionErrors {
    pub ratio_w: f64,
    pub ratio_h: f64,
    pub e_w_pct: f64,
    pub e_h_pct: f64,
}

pub fn dimension_errors(head: &Rect, model: &Rect) -> Result<DimensionErrors, EvalError> {
    if head.is_degenerate() || !head.is_finite() {
        return Err(EvalError::DegenerateGroundTruth { w: head.w, h: head.h });
    }
    let ratio_w = model.w / head.w;
    let ratio_h = model.h / head.h;
    Ok(DimensionErrors {
        ratio_w,
        ratio_h,
        e_w_pct: (ratio_w - 1.0).abs() * 100.0,
        e_h_pct: (ratio_h - 1.0).abs() * 100.0,
    })
}

/// Intersection area over union area, in continuous pixel coordinates.
pub fn iou(a: &Rect, b: &Rect) -> Result<f64, EvalError> {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 && area_b <= 0.0 {
        return Err(EvalError::BothEmpty);
    }
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// One evaluated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seq: u64,
    pub t_ms: f64,
    pub dof_label: DofLabel,
    pub angle_deg: f64,
    pub ratio_w: f64,
    pub ratio_h: f64,
    pub e_w_pct: f64,
    pub e_h_pct: f64,
    pub iou: f64,
}

impl MetricsRow {
    pub fn evaluate(seq: u64, t_ms: f64, dof_label: DofLabel, angle_deg: f64, head: &Rect, model: &Rect) -> Result<Self, EvalError> {
        let d = dimension_errors(head, model)?;
        Ok(Self {
            seq,
            t_ms,
            dof_label,
            angle_deg,
            ratio_w: d.ratio_w,
            ratio_h: d.ratio_h,
            e_w_pct: d.e_w_pct,
            e_h_pct: d.e_h_pct,
            iou: iou(head, model)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n = 1.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Welford's single-pass mean and variance.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        if n == 0 {
            return None;
        }
        let std = if n > 1 { (m2 / (n - 1) as f64).max(0.0).sqrt() } else { 0.0 };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub e_w: Stat,
    pub e_h: Stat,
    pub iou: Stat,
}

impl MetricStats {
    fn of(rows: &[&MetricsRow]) -> Option<Self> {
        Some(Self {
            e_w: Stat::from_values(rows.iter().map(|r| r.e_w_pct))?,
            e_h: Stat::from_values(rows.iter().map(|r| r.e_h_pct))?,
            iou: Stat::from_values(rows.iter().map(|r| r.iou))?,
        })
    }
}

/// One flattened `{metric, dof, mean, std, n}` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub metric: String,
    pub dof: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub overall: MetricStats,
    pub per_dof: BTreeMap<DofLabel, MetricStats>,
    pub n_frames: usize,
}

impl AggregateStats {
    pub fn records(&self) -> Vec<SummaryRecord> {
        let mut out = Vec::new();
        let groups = std::iter::once(("all".to_string(), &self.overall))
            .chain(self.per_dof.iter().map(|(d, s)| (d.to_string(), s)));
        for (dof, s) in groups {
            for (metric, st) in [("e_w", s.e_w), ("e_h", s.e_h), ("iou", s.iou)] {
                out.push(SummaryRecord { metric: metric.into(), dof: dof.clone(), mean: st.mean, std: st.std, n: st.n });
            }
        }
        out
    }

    /// Summary document: `{overall, per_dof, n_frames, records}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "overall": self.overall,
            "per_dof": self.per_dof,
            "n_frames": self.n_frames,
            "records": self.records(),
        })
    }
}

pub fn aggregate(rows: &[MetricsRow]) -> Result<AggregateStats, EvalError> {
    let all: Vec<&MetricsRow> = rows.iter().collect();
    let overall = MetricStats::of(&all).ok_or(EvalError::EmptyInput)?;
    let mut per_dof = BTreeMap::new();
    for dof in DofLabel::ALL {
        let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.dof_label == dof).collect();
        if let Some(s) = MetricStats::of(&group) {
            per_dof.insert(dof, s);
        }
    }
    Ok(AggregateStats { overall, per_dof, n_frames: rows.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn row(dof: DofLabel, e_w: f64, iou: f64) -> MetricsRow {
        MetricsRow { seq: 0, t_ms: 0.0, dof_label: dof, angle_deg: 0.0, ratio_w: 1.0, ratio_h: 1.0, e_w_pct: e_w, e_h_pct: e_w, iou }
    }

    #[test]
    fn dimension_error_examples() {
        let r = Rect::new(10.0, 20.0, 100.0, 80.0);
        let d = dimension_errors(&r, &r).unwrap();
        assert_eq!((d.ratio_w, d.ratio_h, d.e_w_pct, d.e_h_pct), (1.0, 1.0, 0.0, 0.0));

        let d = dimension_errors(&Rect::new(0.0, 0.0, 100.0, 50.0), &Rect::new(0.0, 0.0, 110.09, 50.0)).unwrap();
        assert_abs_diff_eq!(d.e_w_pct, 10.09, epsilon = 1e-9);
        assert_abs_diff_eq!(d.ratio_w, 1.1009, epsilon = 1e-12);

        // an undersized model reads as the same deviation magnitude
        let d = dimension_errors(&Rect::new(0.0, 0.0, 100.0, 50.0), &Rect::new(0.0, 0.0, 89.91, 50.0)).unwrap();
        assert_abs_diff_eq!(d.e_w_pct, 10.09, epsilon = 1e-9);

        assert!(matches!(
            dimension_errors(&Rect::new(0.0, 0.0, 0.0, 10.0), &r),
            Err(EvalError::DegenerateGroundTruth { .. })
        ));
    }

    #[test]
    fn iou_examples() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &Rect::new(20.0, 0.0, 5.0, 5.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(iou(&a, &Rect::new(5.0, 0.0, 10.0, 10.0)).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(iou(&Rect::default(), &Rect::new(3.0, 3.0, 0.0, 0.0)), Err(EvalError::BothEmpty));
        assert_eq!(iou(&Rect::default(), &a).unwrap(), 0.0);
        // touching edges share no area
        assert_eq!(iou(&a, &Rect::new(10.0, 0.0, 10.0, 10.0)).unwrap(), 0.0);
    }

    /// Pixel-center counting on a fine lattice.
    fn raster_iou(a: &Rect, b: &Rect, n: usize, extent: f64) -> f64 {
        let step = extent / n as f64;
        let (mut inter, mut uni) = (0u64, 0u64);
        for j in 0..n {
            let y = (j as f64 + 0.5) * step;
            for i in 0..n {
                let x = (i as f64 + 0.5) * step;
                let ina = x >= a.x && x < a.right() && y >= a.y && y < a.bottom();
                let inb = x >= b.x && x < b.right() && y >= b.y && y < b.bottom();
                inter += (ina && inb) as u64;
                uni += (ina || inb) as u64;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn half_overlap_matches_raster_oracle() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        let b = Rect::new(5.0, 0.0, 10.0, 10.0);
        let oracle = raster_iou(&a, &b, 512, 16.0);
        assert_abs_diff_eq!(iou(&a, &b).unwrap(), oracle, epsilon = 1e-3);
    }

    #[test]
    fn aggregate_examples() {
        let rows: Vec<_> = (0..5).map(|_| row(DofLabel::Yaw, 1.0, 0.8)).collect();
        let s = aggregate(&rows).unwrap();
        assert_abs_diff_eq!(s.overall.iou.mean, 0.8, epsilon = 1e-15);
        assert_eq!(s.overall.iou.std, 0.0);

        let rows = vec![row(DofLabel::Pitch, 1.0, 1.0), row(DofLabel::Pitch, 2.0, 1.0), row(DofLabel::Roll, 3.0, 1.0)];
        let s = aggregate(&rows).unwrap();
        assert_abs_diff_eq!(s.overall.e_w.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.overall.e_w.std, 1.0, epsilon = 1e-15);
        assert_eq!(s.per_dof[&DofLabel::Pitch].e_w.n, 2);
        assert_eq!(s.per_dof[&DofLabel::Roll].e_w.std, 0.0);
        assert!(!s.per_dof.contains_key(&DofLabel::Yaw));
        assert_eq!(s.records().len(), 9);

        assert_eq!(aggregate(&[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn aggregate_matches_two_pass_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<MetricsRow> = (0..1000)
            .map(|i| MetricsRow {
                seq: i,
                t_ms: i as f64,
                dof_label: DofLabel::ALL[rng.random_range(0..4)],
                angle_deg: 0.0,
                ratio_w: 1.0,
                ratio_h: 1.0,
                e_w_pct: rng.random_range(0.0..30.0),
                e_h_pct: rng.random_range(0.0..30.0),
                iou: rng.random_range(0.5..1.0),
            })
            .collect();
        let two_pass = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        };
        let s = aggregate(&rows).unwrap();
        for (stat, vals) in [
            (s.overall.e_w, rows.iter().map(|r| r.e_w_pct).collect::<Vec<_>>()),
            (s.overall.e_h, rows.iter().map(|r| r.e_h_pct).collect()),
            (s.overall.iou, rows.iter().map(|r| r.iou).collect()),
        ] {
            let (m, sd) = two_pass(&vals);
            assert!((stat.mean - m).abs() <= 1e-12 * m.abs().max(1.0));
            assert!((stat.std - sd).abs() <= 1e-12 * sd.abs().max(1.0));
        }
        for dof in DofLabel::ALL {
            let vals: Vec<f64> = rows.iter().filter(|r| r.dof_label == dof).map(|r| r.iou).collect();
            let (m, sd) = two_pass(&vals);
            let st = s.per_dof[&dof].iou;
            assert_eq!(st.n, vals.len());
            assert!((st.mean - m).abs() <= 1e-12 && (st.std - sd).abs() <= 1e-12);
        }
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (-100.0f64..100.0, -100.0f64..100.0, 0.5f64..80.0, 0.5f64..80.0).prop_map(|(x, y, w, h)| Rect::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric(a in arb_rect(), b in arb_rect()) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        }

        #[test]
        fn iou_self_and_containment(a in arb_rect(), fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.05f64..1.0, fh in 0.05f64..1.0) {
            prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
            let b = Rect::new(a.x + fx * (1.0 - fw) * a.w, a.y + fy * (1.0 - fh) * a.h, fw * a.w, fh * a.h);
            let expected = b.area() / a.area();
            prop_assert!((iou(&a, &b).unwrap() - expected).abs() <= 1e-9);
        }

        #[test]
        fn metrics_translation_invariant(a in arb_rect(), b in arb_rect(), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let t = |r: &Rect| Rect::new(r.x + dx, r.y + dy, r.w, r.h);
            prop_assert!((iou(&a, &b).unwrap() - iou(&t(&a), &t(&b)).unwrap()).abs() <= 1e-9);
            prop_assert_eq!(dimension_errors(&a, &b).unwrap(), dimension_errors(&t(&a), &t(&b)).unwrap());
        }

        #[test]
        fn metrics_scale_covariant(a in arb_rect(), b in arb_rect(), k in 0.1f64..10.0) {
            let s = |r: &Rect| r.rescaled(k, k);
            prop_assert!((iou(&a, &b).unwrap() - iou(&s(&a), &s(&b)).unwrap()).abs() <= 1e-9);
            let (d0, d1) = (dimension_errors(&a, &b).unwrap(), dimension_errors(&s(&a), &s(&b)).unwrap());
            prop_assert!((d0.ratio_w - d1.ratio_w).abs() <= 1e-12 * d0.ratio_w);
            prop_assert!((d0.e_h_pct - d1.e_h_pct).abs() <= 1e-9 * (1.0 + d0.e_h_pct));
        }
    }
}
