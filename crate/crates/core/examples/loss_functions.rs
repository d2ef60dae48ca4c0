//! Evaluates the group losses on a hand-made prediction and shows how the
//! gradient with respect to the logits splits between the groups.

use simlearn::loss::{cce, group_penalty, sll, sll_grad_logits, wgcc};
use simlearn::nn::layers::softmax_row;
use simlearn::{Group, GroupLayout, Hyperparameters, LabelVector};

fn main() -> simlearn::Result<()> {
    let layout = GroupLayout::new(3, 2)?;
    let hyper = Hyperparameters::new(0.7, 1.0, 1.0)?;
    let logits = [2.0, 0.5, -1.0, 1.0, 0.0];
    let probs = softmax_row(&logits);

    for (group, class) in [(Group::Target, 0), (Group::Auxiliary, 1)] {
        let y = LabelVector::one_hot(layout, group, class)?;
        println!("label: {} class {class}", group.as_str());
        println!("  probabilities    {probs:.4?}");
        println!("  cce              {:.6}", cce(y.values(), &probs)?);
        println!("  wgcc (lambda .7) {:.6}", wgcc(y.values(), &probs, layout, hyper.lambda)?);
        println!("  group penalty    {:.6}", group_penalty(y.values(), &probs, layout, hyper.alpha, hyper.beta)?);
        println!("  sll              {:.6}", sll(y.values(), &probs, layout, &hyper)?);
        let grad = sll_grad_logits(y.values(), &logits, layout, &hyper)?;
        println!("  d sll / d logits {grad:+.4?}");
    }
    Ok(())
}
