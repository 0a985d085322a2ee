use std::fmt::Write as _;
use std::path::Path;

use super::run::{
    read_artifact, MetaTopicsArtifact, MetricsReport, RunManifest, Stage, META_TOPICS_FILE, METRICS_FILE,
};
use crate::error::Result;

/// Markdown summary of a completed run directory.
pub fn report(dir: &Path) -> Result<String> {
    let manifest = RunManifest::load(dir)?;
    let metrics: MetricsReport = read_artifact(dir, METRICS_FILE, Stage::Metrics)?;
    let meta: MetaTopicsArtifact = read_artifact(dir, META_TOPICS_FILE, Stage::Dendrogram)?;
    Ok(render(&manifest, &metrics, &meta))
}

fn sorted_keys<V>(map: &std::collections::BTreeMap<String, V>) -> Vec<&String> {
    let mut keys: Vec<&String> = map.keys().collect();
    keys.sort_by(|a, b| {
        let (x, y) = (
            a.parse::<f64>().unwrap_or(f64::NAN),
            b.parse::<f64>().unwrap_or(f64::NAN),
        );
        x.total_cmp(&y).then(a.cmp(b))
    });
    keys
}

pub fn render(manifest: &RunManifest, metrics: &MetricsReport, meta: &MetaTopicsArtifact) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# Run report\n");
    let _ = writeln!(w, "- seed: {}", manifest.seed);
    let _ = writeln!(w, "- config hash: `{}`", manifest.config_hash);
    let _ = writeln!(w, "- ensemble topics: {}", metrics.n_topics);
    let _ = writeln!(w, "- meta topics at h = {}: {}\n", meta.cut_height, meta.num_clusters);

    let _ = writeln!(w, "## Topic coherence\n");
    let _ = writeln!(w, "| measure | window | mean | topics | absent terms |");
    let _ = writeln!(w, "|---|---|---|---|---|");
    for (name, c) in &metrics.coherence {
        let _ = writeln!(
            w,
            "| {} | {} | {:.4} | {} | {} |",
            name.to_uppercase(),
            c.window,
            c.mean,
            c.per_topic.len(),
            c.absent_terms
        );
    }

    let _ = writeln!(w, "\n## Temporal neighbourhood overlap (k = {})\n", metrics.knn_k);
    let _ = writeln!(w, "| w | TNO | shuffled mean | shuffled std |");
    let _ = writeln!(w, "|---|---|---|---|");
    for key in sorted_keys(&metrics.tno) {
        let null = metrics.tno_null.get(key);
        let _ = writeln!(
            w,
            "| {key} | {:.4} | {} | {} |",
            metrics.tno[key],
            null.map_or("-".into(), |n| format!("{:.4}", n.mean)),
            null.map_or("-".into(), |n| format!("{:.4}", n.std)),
        );
    }

    let _ = writeln!(w, "\n## Exponential temporal spectral gap\n");
    if metrics.etsg.is_empty() {
        let _ = writeln!(w, "_No decay values configured; section omitted._");
    } else {
        let _ = writeln!(w, "eps = {:e}\n", metrics.etsg_eps);
        let _ = writeln!(w, "| tau | ETSG | shuffled mean | shuffled std |");
        let _ = writeln!(w, "|---|---|---|---|");
        for key in sorted_keys(&metrics.etsg) {
            let null = metrics.etsg_null.get(key);
            let _ = writeln!(
                w,
                "| {key} | {:.6e} | {} | {} |",
                metrics.etsg[key],
                null.map_or("-".into(), |n| format!("{:.6e}", n.mean)),
                null.map_or("-".into(), |n| format!("{:.3e}", n.std)),
            );
        }
    }

    let _ = writeln!(w, "\n## Connectivity\n");
    let _ = writeln!(w, "NComp = {} (k = {})", metrics.ncomp, metrics.knn_k);

    let _ = writeln!(w, "\n## Meta topics (cut at h = {})\n", meta.cut_height);
    for t in &meta.topics {
        let span = match (t.chunks.first(), t.chunks.last()) {
            (Some(a), Some(b)) if a != b => format!("chunks {a}-{b}"),
            (Some(a), _) => format!("chunk {a}"),
            _ => String::new(),
        };
        let _ = writeln!(w, "### Meta topic {} ({} topics, {span})\n", t.id, t.leaves.len());
        let _ = writeln!(w, "{}\n", t.top_terms.join(", "));
    }
    s
}
