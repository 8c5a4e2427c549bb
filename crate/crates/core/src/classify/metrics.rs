use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::FunctionRecord;
use crate::error::{Error, Result};

pub const DEFAULT_PERCENTILES: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileCapture {
    pub percent: f64,
    /// Rows examined: ceil(percent/100 * n), at least one.
    pub examined: usize,
    /// Positives found in the examined rows; fractional when a tie group straddles the cut.
    pub positives_found: f64,
    pub captured_fraction: f64,
    pub precision: f64,
    /// precision / base rate
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub positives: usize,
    pub base_rate: f64,
    pub threshold: f64,
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub lift_area: Option<f64>,
    pub gain_curve: Vec<(f64, f64)>,
    pub top_percent_capture: Vec<PercentileCapture>,
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("no scores to evaluate".into()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Data(format!("score {i} is NaN")));
    }
    Ok(())
}

/// Indices by descending score, ties by ascending index.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Consecutive runs of equal score in `order`, as (start, end, positives).
fn tie_groups(order: &[usize], scores: &[f64], labels: &[u8]) -> Vec<(usize, usize, usize)> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let mut pos = 0;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            pos += usize::from(labels[order[end]] == 1);
            end += 1;
        }
        groups.push((start, end, pos));
        start = end;
    }
    groups
}

/// Area under the ROC curve via average ranks; ties count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data("AUC is undefined for single-class labels".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let in_group = idx[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += avg_rank * in_group as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Cumulative gains: (fraction examined, fraction of positives captured) at
/// every tie-group boundary, sweeping scores in descending order.
pub fn gain_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    check_inputs(scores, labels)?;
    let total = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let order = descending(scores);
    let mut curve = vec![(0.0, 0.0)];
    let mut found = 0;
    for (_, end, p) in tie_groups(&order, scores, labels) {
        found += p;
        let captured = if pos > 0.0 { found as f64 / pos } else { end as f64 / total };
        curve.push((end as f64 / total, captured));
    }
    Ok(curve)
}

/// Trapezoidal area under a gain curve.
pub fn area_under_gain(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// (AUG - 0.5) / (AUG_perfect - 0.5) where the perfect ranker's area is 1 - base_rate/2.
fn lift_area(curve: &[(f64, f64)], base_rate: f64) -> Option<f64> {
    if base_rate <= 0.0 || base_rate >= 1.0 {
        return None;
    }
    let perfect = 1.0 - base_rate / 2.0;
    Some((area_under_gain(curve) - 0.5) / (perfect - 0.5))
}

/// Positives in the top `percent`% of rows. A tie group straddling the cut
/// contributes in proportion to how much of it falls inside.
pub fn top_percent_capture(scores: &[f64], labels: &[u8], percent: f64) -> Result<PercentileCapture> {
    check_inputs(scores, labels)?;
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::Config(format!("percentile {percent} outside (0, 100]")));
    }
    let order = descending(scores);
    let examined = examined_count(labels.len(), percent);
    let mut found = 0.0;
    for (start, end, p) in tie_groups(&order, scores, labels) {
        if start >= examined {
            break;
        }
        let inside = end.min(examined) - start;
        found += p as f64 * inside as f64 / (end - start) as f64;
    }
    Ok(capture_stats(percent, examined, found, labels))
}

fn examined_count(n: usize, percent: f64) -> usize {
    ((percent / 100.0 * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

fn capture_stats(percent: f64, examined: usize, found: f64, labels: &[u8]) -> PercentileCapture {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let base_rate = pos / labels.len() as f64;
    let precision = found / examined as f64;
    PercentileCapture {
        percent,
        examined,
        positives_found: found,
        captured_fraction: if pos > 0.0 { found / pos } else { 0.0 },
        precision,
        lift: if base_rate > 0.0 { precision / base_rate } else { 0.0 },
    }
}

/// Full evaluation. AUC and lift area are `None` for single-class labels.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    check_inputs(scores, labels)?;
    let n = labels.len();
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let base_rate = positives as f64 / n as f64;
    let gain = gain_curve(scores, labels)?;
    let auc = auc(scores, labels).ok();
    let lift = auc.and(lift_area(&gain, base_rate));
    let top = DEFAULT_PERCENTILES
        .iter()
        .map(|&p| top_percent_capture(scores, labels, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        n,
        positives,
        base_rate,
        threshold,
        auc,
        accuracy: ratio(tp + tn, n),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        specificity: ratio(tn, tn + fp),
        lift_area: lift,
        gain_curve: gain,
        top_percent_capture: top,
    })
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn capture_at(&self, percent: f64) -> Option<&PercentileCapture> {
        self.top_percent_capture.iter().find(|c| c.percent == percent)
    }
}

pub fn write_gain_curve_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fraction", "captured"])?;
    for (x, y) in curve {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFunction {
    pub rank: usize,
    pub function_id: u64,
    pub name: String,
    pub file_path: String,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub ranked: Vec<RankedFunction>,
    pub capture: Vec<PercentileCapture>,
}

/// Orders functions by descending score, ties by ascending function id.
/// Capture counts follow that exact order.
pub fn rank_report(records: &[FunctionRecord], scores: &[f64]) -> Result<RiskReport> {
    if records.len() != scores.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} records",
            scores.len(),
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => records[a].id.cmp(&records[b].id),
        o => o,
    });
    let ranked: Vec<RankedFunction> = order
        .iter()
        .enumerate()
        .map(|(r, &i)| RankedFunction {
            rank: r + 1,
            function_id: records[i].id,
            name: records[i].name.clone(),
            file_path: records[i].file_path.clone(),
            score: scores[i],
            label: records[i].label,
        })
        .collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let capture = if records.is_empty() {
        Vec::new()
    } else {
        DEFAULT_PERCENTILES
            .iter()
            .map(|&p| {
                let examined = examined_count(ranked.len(), p);
                let found = ranked[..examined].iter().filter(|r| r.label == 1).count();
                capture_stats(p, examined, found as f64, &labels)
            })
            .collect()
    };
    Ok(RiskReport { ranked, capture })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_count(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn record(id: u64, label: u8) -> FunctionRecord {
        FunctionRecord {
            id,
            name: format!("f{id}"),
            file_path: "a.c".into(),
            line_start: 1,
            line_end: 1,
            body: String::new(),
            param_count: 0,
            label,
        }
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_keeps_threshold_metrics() {
        assert!(auc(&[0.2, 0.3], &[0, 0]).is_err());
        let r = evaluate(&[0.2, 0.7], &[0, 0], 0.5).unwrap();
        assert_eq!(r.auc, None);
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.specificity, 0.5);
    }

    #[test]
    fn random_scores_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let labels: Vec<u8> = (0..10_000).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!((a - 0.5).abs() <= 0.02, "{a}");
    }

    #[test]
    fn hand_checked_threshold_metrics() {
        // tp=2 fp=1 tn=2 fn=1
        let r = evaluate(&[0.9, 0.8, 0.6, 0.4, 0.3, 0.1], &[1, 0, 1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(r.accuracy, 4.0 / 6.0);
        assert_eq!(r.precision, 2.0 / 3.0);
        assert_eq!(r.recall, 2.0 / 3.0);
        assert_eq!(r.specificity, 2.0 / 3.0);
        // concordant pairs: 3 + 2 + 2 = 7 of 9
        assert!((r.auc.unwrap() - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn gain_curve_shape() {
        let c = gain_curve(&[0.9, 0.5, 0.5, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(c, vec![(0.0, 0.0), (0.25, 0.5), (0.75, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn lift_area_bounds() {
        let labels = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        let perfect: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let r = evaluate(&perfect, &labels, 0.5).unwrap();
        assert!((r.lift_area.unwrap() - 1.0).abs() < 1e-12);
        let flat = evaluate(&[0.3; 10], &labels, 0.5).unwrap();
        assert!(flat.lift_area.unwrap().abs() < 1e-12);
    }

    #[test]
    fn capture_splits_straddling_ties() {
        // top 10% of 20 rows = 2 rows; the top group of 4 holds 2 positives
        let mut scores = vec![0.1; 20];
        let mut labels = vec![0; 20];
        for i in 0..4 {
            scores[i] = 0.9;
        }
        labels[0] = 1;
        labels[3] = 1;
        labels[10] = 1;
        let c = top_percent_capture(&scores, &labels, 10.0).unwrap();
        assert_eq!(c.examined, 2);
        assert!((c.positives_found - 1.0).abs() < 1e-12);
        assert!((c.captured_fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn planted_positives_on_top() {
        for (n, p) in [(1000usize, 5usize), (1000, 30), (500, 5)] {
            let records: Vec<FunctionRecord> = (0..n as u64).map(|i| record(i, u8::from(i % (n / p) as u64 == 0))).collect();
            let p = records.iter().filter(|r| r.label == 1).count();
            let scores: Vec<f64> = records.iter().map(|r| f64::from(r.label) + 0.001 * (r.id % 7) as f64).collect();
            let report = rank_report(&records, &scores).unwrap();
            assert_eq!(report.ranked.len(), n);
            let expect = (0.01 * n as f64 / p as f64).min(1.0);
            assert!((report.capture[0].captured_fraction - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_scores_rank_by_id() {
        let records: Vec<FunctionRecord> = [5u64, 2, 9, 1].iter().map(|&i| record(i, 0)).collect();
        let report = rank_report(&records, &[0.5; 4]).unwrap();
        let ids: Vec<u64> = report.ranked.iter().map(|r| r.function_id).collect();
        assert_eq!(ids, vec![1, 2, 5, 9]);
        assert_eq!(report.ranked[3].rank, 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..=12)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
            let pos = labels.iter().filter(|&&l| l == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            prop_assert!((auc(&scores, &labels).unwrap() - pair_count(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn monotone_transform_invariance(
            data in prop::collection::vec((-50i32..50, any::<bool>()), 2..40)
        ) {
            let raw: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
            let moved: Vec<f64> = raw.iter().map(|x| 2.0 * x + 1.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
            let a = evaluate(&raw, &labels, 0.0).unwrap();
            let b = evaluate(&moved, &labels, 0.0).unwrap();
            prop_assert_eq!(a.auc, b.auc);
            prop_assert_eq!(&a.gain_curve, &b.gain_curve);
            prop_assert_eq!(&a.top_percent_capture, &b.top_percent_capture);
            let records: Vec<FunctionRecord> = (0..raw.len() as u64).map(|i| record(i, labels[i as usize])).collect();
            let ra: Vec<u64> = rank_report(&records, &raw).unwrap().ranked.iter().map(|r| r.function_id).collect();
            let rb: Vec<u64> = rank_report(&records, &moved).unwrap().ranked.iter().map(|r| r.function_id).collect();
            prop_assert_eq!(ra, rb);
        }

        #[test]
        fn gain_curve_invariants(
            data in prop::collection::vec((0u8..20, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s)).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
            let c = gain_curve(&scores, &labels).unwrap();
            prop_assert_eq!(c[0], (0.0, 0.0));
            prop_assert_eq!(*c.last().unwrap(), (1.0, 1.0));
            for w in c.windows(2) {
                prop_assert!(w[1].0 > w[0].0 && w[1].1 >= w[0].1);
            }
            if let Ok(a) = auc(&scores, &labels) {
                // area form: AUG = pi/2 + (1 - pi) * AUC
                let pi = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64;
                let aug = area_under_gain(&c);
                prop_assert!((aug - (pi / 2.0 + (1.0 - pi) * a)).abs() < 1e-12);
                if a > 0.5 {
                    prop_assert!(aug > 0.5);
                }
            }
        }
    }
}
