use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::Label;

/// ROC points from a descending threshold sweep. `thresholds[0]` is +inf
/// for the `(0, 0)` start; tied scores share one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    #[serde(with = "extended_floats")]
    pub thresholds: Vec<f64>,
}

/// JSON has no infinities; they are written as the strings `"inf"` and
/// `"-inf"`.
mod extended_floats {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let repr: Vec<Repr> = values
            .iter()
            .map(|&v| match v {
                f64::INFINITY => Repr::Named("inf".into()),
                f64::NEG_INFINITY => Repr::Named("-inf".into()),
                v => Repr::Finite(v),
            })
            .collect();
        repr.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Finite(v) => Ok(v),
                Repr::Named(n) if n == "inf" => Ok(f64::INFINITY),
                Repr::Named(n) if n == "-inf" => Ok(f64::NEG_INFINITY),
                Repr::Named(n) => Err(de::Error::custom(format!("invalid threshold `{n}`"))),
            })
            .collect()
    }
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    /// `threshold,fpr,tpr` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for (t, (fpr, tpr)) in self.thresholds.iter().zip(&self.points) {
            s.push_str(&format!("{t},{fpr},{tpr}\n"));
        }
        s
    }
}

fn class_counts(y_true: &[Label], scores: &[f64]) -> Result<(usize, usize), EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), scores.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NanScore);
    }
    let pos = y_true.iter().filter(|&&l| l == Label::Abnormal).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Abnormal is the positive class; larger scores mean more abnormal.
pub fn roc_curve(y_true: &[Label], scores: &[f64]) -> Result<RocCurve, EvalError> {
    let (pos, neg) = class_counts(y_true, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if y_true[order[k]] == Label::Abnormal {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(threshold);
    }
    Ok(RocCurve { points, thresholds })
}

/// Mann–Whitney AUC: fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Computed from mid-ranks.
pub fn auc(y_true: &[Label], scores: &[f64]) -> Result<f64, EvalError> {
    let (pos, neg) = class_counts(y_true, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the rank sum keeps tied mid-ranks integral
    let mut rank_sum_x2: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let start = k;
        let value = scores[order[k]];
        while k < order.len() && scores[order[k]] == value {
            k += 1;
        }
        let mid_x2 = (start + 1 + k) as u128;
        let pos_in_group = order[start..k].iter().filter(|&&i| y_true[i] == Label::Abnormal).count();
        rank_sum_x2 += mid_x2 * pos_in_group as u128;
    }
    let pos = pos as u128;
    let u_x2 = rank_sum_x2 - pos * (pos + 1);
    Ok(u_x2 as f64 / (2 * pos * neg as u128) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Abnormal as P, Normal as N};

    #[test]
    fn separated_scores() {
        let y = [N, N, P, P, N, P];
        let s = [0.1, 0.2, 0.8, 0.9, 0.3, 0.7];
        assert_eq!(auc(&y, &s).unwrap(), 1.0);
        let roc = roc_curve(&y, &s).unwrap();
        assert_eq!(roc.area(), 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn all_ties() {
        let y = [N, P, P, N, N];
        let s = [0.4; 5];
        assert_eq!(auc(&y, &s).unwrap(), 0.5);
        let roc = roc_curve(&y, &s).unwrap();
        assert_eq!(roc.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc.area(), 0.5);
    }

    #[test]
    fn four_pair_count() {
        let y = [P, P, N, N];
        let s = [0.9, 0.4, 0.6, 0.2];
        assert_eq!(auc(&y, &s).unwrap(), 0.75);
        assert_eq!(roc_curve(&y, &s).unwrap().area(), 0.75);
    }

    #[test]
    fn errors() {
        assert!(matches!(auc(&[P, P], &[0.1, 0.2]), Err(EvalError::SingleClass)));
        assert!(matches!(roc_curve(&[P, N], &[0.1]), Err(EvalError::LengthMismatch(2, 1))));
        assert!(matches!(auc(&[P, N], &[0.1, f64::NAN]), Err(EvalError::NanScore)));
    }

    #[test]
    fn json_roundtrip_keeps_infinite_threshold() {
        let roc = roc_curve(&[P, N, P], &[0.5, -0.5, 0.25]).unwrap();
        let json = serde_json::to_string(&roc).unwrap();
        assert!(json.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<RocCurve>(&json).unwrap(), roc);
    }

    #[test]
    fn csv_rows() {
        let roc = roc_curve(&[P, N], &[0.5, -0.5]).unwrap();
        assert_eq!(roc.to_csv(), "threshold,fpr,tpr\ninf,0,0\n0.5,0,1\n-0.5,1,1\n");
    }
}
