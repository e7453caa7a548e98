//! Writes a writer-keyed JSON file in the LEAF layout, loads it back and
//! splits it one agent per writer.
//!
//! Usage: cargo run --example femnist_partition

use std::collections::BTreeMap;

use dp_iadmm::data::{load_femnist_json, partition_by_writer, pool_writers, synthetic_writers};
use serde_json::json;

fn main() -> dp_iadmm::Result<()> {
    let writers = synthetic_writers(&[40, 25, 60], 6, 49, 10, 0.7, 3)?;
    let user_data: BTreeMap<_, _> = writers
        .iter()
        .map(|w| {
            (
                w.writer.clone(),
                json!({ "x": w.data.features(), "y": w.data.labels() }),
            )
        })
        .collect();
    let users: Vec<_> = user_data.keys().cloned().collect();
    let num_samples: Vec<_> = writers.iter().map(|w| w.data.len()).collect();
    let doc = json!({ "users": users, "num_samples": num_samples, "user_data": user_data });

    let path = std::env::temp_dir().join("femnist_partition_example.json");
    std::fs::write(&path, doc.to_string())?;
    let loaded = load_femnist_json(&path)?;
    let test = pool_writers(&loaded[..2])?;
    let fed = partition_by_writer(&loaded, test)?;
    for (w, shard) in loaded.iter().zip(&fed.shards) {
        let mut counts = vec![0; fed.dims.1];
        for s in shard.samples() {
            counts[s.class()] += 1;
        }
        println!(
            "{} -> agent {}: {} samples, class counts {:?}",
            w.writer,
            shard.agent_id(),
            shard.shard_size(),
            counts
        );
    }
    Ok(())
}
