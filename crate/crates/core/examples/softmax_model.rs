//! Softmax probabilities, loss, gradient and sensitivity of a tiny
//! logistic model.
//!
//! Usage: cargo run --example softmax_model

use dp_iadmm::model::{local_gradient, local_objective, sensitivity, softmax_probs, AgentShard, ModelConfig, Sample};
use dp_iadmm::ParamMatrix;

fn main() -> dp_iadmm::Result<()> {
    let shard = AgentShard::new(
        0,
        vec![
            Sample::new(vec![1.0, 0.0, 0.5], 0, 3)?,
            Sample::new(vec![0.0, 1.0, 0.5], 1, 3)?,
            Sample::new(vec![0.2, 0.2, 1.0], 2, 3)?,
        ],
    )?;
    let cfg = ModelConfig::for_shards(1e-3, std::slice::from_ref(&shard));
    let w = ParamMatrix::from_fn(3, 3, |j, k| if j == k { 1.0 } else { 0.0 });

    for s in shard.samples() {
        println!("x = {:?} -> p = {:.4?}", s.features(), softmax_probs(&w, s.features())?);
    }
    println!("f(w) = {:.6}", local_objective(&w, &shard, &cfg)?);
    let g = local_gradient(&w, &shard, &cfg)?;
    println!("grad f(w) = {:.4?}", g.as_slice());
    println!("sensitivity = {:.6}", sensitivity(&w, &shard, &cfg)?);
    Ok(())
}
