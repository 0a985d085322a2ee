use std::fmt::Write as _;
use std::path::Path;

use super::run::{read_artifact, Stage, AUTHOR_TOPICS_FILE, DENDROGRAM_FILE};
use crate::error::{Error, Result};
use crate::hrg::{AuthorTopicDist, DendrogramExport, HrgModel};

/// Rebuilds the fitted link model from a run directory.
pub fn load_hrg(dir: &Path) -> Result<HrgModel> {
    let export: DendrogramExport = read_artifact(dir, DENDROGRAM_FILE, Stage::Dendrogram)?;
    let mut authors: Vec<AuthorTopicDist> = read_artifact(dir, AUTHOR_TOPICS_FILE, Stage::Dendrogram)?;
    authors.sort_by(|a, b| a.author.cmp(&b.author));
    let (dendrogram, stats) = export.into_parts()?;
    let stats = stats.ok_or_else(|| Error::Data(format!("{DENDROGRAM_FILE} has no node statistics")))?;
    Ok(HrgModel {
        dendrogram,
        stats,
        authors,
    })
}

/// Scores `author,author` lines, writing `author_u,author_v,probability`.
/// Blank lines and a leading header are skipped.
pub fn link_batch(model: &HrgModel, csv: &str) -> Result<String> {
    let mut out = String::from("author_u,author_v,probability\n");
    for (i, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("author_u,author_v")) {
            continue;
        }
        let (u, v) = line
            .split_once(',')
            .ok_or_else(|| Error::InvalidInput(format!("line {}: expected `author,author`", i + 1)))?;
        let (u, v) = (u.trim(), v.trim());
        let p = model.link(u, v)?;
        let _ = writeln!(out, "{u},{v},{p}");
    }
    Ok(out)
}
