//! Prints the layer-shape table and parameter count of every architecture.

use hybrid_qcnn::model::{count_parameters, ModelKind, ModelSpec};

fn dims(d: &Option<Vec<usize>>) -> String {
    d.as_ref().map_or_else(|| "-".to_string(), |v| format!("{v:?}"))
}

fn main() {
    for kind in ModelKind::ALL {
        let spec = ModelSpec::new(kind);
        println!("{kind}: {} parameters", count_parameters(&spec));
        for row in spec.shape_table() {
            println!("  {:<36} {:>14} -> {}", row.layer, dims(&row.input), dims(&row.output));
        }
        println!();
    }
}
