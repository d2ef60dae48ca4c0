//! One-vs-rest ROC/AUC on a small hand-written score table.

use simlearn::metrics::{binary_auc, roc_auc_ovr, roc_curve};

fn main() -> simlearn::Result<()> {
    // Target-group scores for six samples of a three-class problem.
    let scores = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.4, 0.4, 0.2],
        vec![0.2, 0.6, 0.2],
        vec![0.3, 0.5, 0.2],
        vec![0.1, 0.2, 0.7],
        vec![0.5, 0.1, 0.4],
    ];
    let classes = vec![0, 0, 1, 1, 2, 2];
    let auc = roc_auc_ovr(&scores, &classes, 3)?;
    for (c, a) in auc.per_class.iter().enumerate() {
        println!("class {c}: AUC {}", a.map_or("n/a".into(), |a| format!("{a:.4}")));
    }
    println!("macro AUC {:.4}", auc.macro_auc.unwrap_or(f64::NAN));

    let class0: Vec<f64> = scores.iter().map(|s| s[0]).collect();
    let positive: Vec<bool> = classes.iter().map(|&c| c == 0).collect();
    println!("class 0 ROC points (fpr, tpr):");
    for (fpr, tpr) in roc_curve(&class0, &positive) {
        println!("  {fpr:.3}  {tpr:.3}");
    }
    println!("rank-sum AUC agrees: {:?}", binary_auc(&class0, &positive));
    Ok(())
}
