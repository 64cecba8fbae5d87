use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub(crate) fn check_pair(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction length {} differs from truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.iter().chain(truth).any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(())
}

/// Point-wise precision, recall and F1 without any adjustment. Undefined
/// ratios are reported as 0.
pub fn f1_pointwise(pred: &[u8], truth: &[u8]) -> Result<PointwiseScores> {
    check_pair(pred, truth)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PointwiseScores { precision, recall, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = f1_pointwise(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_pointwise(&[1, 0, 1], &[1, 0, 1]).unwrap().f1, 1.0);
        assert_eq!(f1_pointwise(&[0, 0, 0], &[1, 0, 1]).unwrap().f1, 0.0);
        assert_eq!(f1_pointwise(&[1, 1], &[0, 0]).unwrap().f1, 0.0);
        assert!(f1_pointwise(&[1], &[1, 0]).is_err());
        assert!(f1_pointwise(&[2], &[1]).is_err());
    }

    proptest! {
        #[test]
        fn fixing_one_point_never_lowers_f1(
            pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60),
            pick in any::<prop::sample::Index>(),
        ) {
            let pred: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let wrong: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] != truth[i]).collect();
            prop_assume!(!wrong.is_empty());
            let i = wrong[pick.index(wrong.len())];
            let mut better = pred.clone();
            better[i] = truth[i];
            let before = f1_pointwise(&pred, &truth).unwrap().f1;
            let after = f1_pointwise(&better, &truth).unwrap().f1;
            prop_assert!(after >= before);
        }
    }
}
