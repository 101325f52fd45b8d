use serde::{Deserialize, Serialize};

/// One curve point at a decision threshold (`score >= threshold` is
/// positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// `x` = false-positive rate, `y` = true-positive rate.
    pub roc: Vec<CurvePoint>,
    /// `x` = recall, `y` = precision.
    pub pr: Vec<CurvePoint>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
}

fn trapezoid(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0)
        .sum()
}

/// ROC and precision-recall points with a threshold at every distinct
/// score. AUCs are absent unless both classes occur.
pub fn roc_pr_points(scores: &[f64], positive: &[bool]) -> Curves {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let rate = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut roc = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    let mut pr = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        roc.push(CurvePoint {
            threshold: t,
            x: rate(fp, n_neg),
            y: rate(tp, n_pos),
        });
        pr.push(CurvePoint {
            threshold: t,
            x: rate(tp, n_pos),
            y: rate(tp, tp + fp),
        });
    }
    let both = n_pos > 0 && n_neg > 0;
    Curves {
        roc_auc: both.then(|| trapezoid(&roc)),
        pr_auc: both.then(|| trapezoid(&pr)),
        roc,
        pr,
    }
}

/// `threshold,x,y` rows with a header.
pub fn curve_csv(points: &[CurvePoint], x: &str, y: &str) -> String {
    let mut s = format!("threshold,{x},{y}\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.threshold, p.x, p.y));
    }
    s
}
