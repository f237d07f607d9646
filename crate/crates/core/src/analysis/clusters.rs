use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::deploy::CompactModel;
use crate::embed::{EmbedMode, Slot};
use crate::error::{Error, Result};

/// Words sharing pointer `cluster` (in codebook `book` for CC; 0 otherwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub book: usize,
    pub cluster: usize,
    /// Most frequent first; UNK, having no training count, comes last.
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub groups: Vec<ClusterGroup>,
    /// Words covered by pointers (per book).
    pub clustered_words: usize,
    /// Members listed per group when printed.
    pub top_n: usize,
}

impl ClusterReport {
    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.members.len()).collect()
    }
}

impl fmt::Display for ClusterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let books = self.groups.iter().map(|g| g.book).max().map_or(0, |b| b + 1);
        for g in &self.groups {
            let preview: Vec<&str> = g.members.iter().take(self.top_n).map(String::as_str).collect();
            if books > 1 {
                write!(f, "book {} ", g.book)?;
            }
            writeln!(
                f,
                "cluster {} ({} words): {}",
                g.cluster,
                g.members.len(),
                preview.join(" ")
            )?;
        }
        Ok(())
    }
}

/// Groups the clustered words of a deployed model by pointer. Groups are
/// ordered by book, then cluster index; empty clusters are left out.
pub fn dump_clusters(model: &CompactModel, top_n: usize) -> Result<ClusterReport> {
    let v = model.mode.v();
    // rows in frequency order: corpus words by rank, then UNK
    let ranked = (1..v).chain(std::iter::once(0));
    let word = |row: usize| model.vocab.word(row as u32 + 1).to_owned();
    let mut groups: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    let mut clustered = 0;
    match model.mode {
        EmbedMode::Se { .. } => return Err(Error::Unsupported("cluster report for standard embeddings")),
        EmbedMode::Ce { .. } | EmbedMode::Cae { .. } => {
            for row in ranked {
                groups
                    .entry((0, model.pointers[row] as usize))
                    .or_default()
                    .push(word(row));
                clustered += 1;
            }
        }
        EmbedMode::Me { .. } => {
            let slots = model_slots(model);
            for row in ranked {
                if let Slot::Clustered(j) = slots[row] {
                    groups
                        .entry((0, model.pointers[j] as usize))
                        .or_default()
                        .push(word(row));
                    clustered += 1;
                }
            }
        }
        EmbedMode::Cc { books, .. } => {
            for row in ranked {
                for b in 0..books {
                    let code = model.pointers[row * books + b] as usize;
                    groups.entry((b, code)).or_default().push(word(row));
                }
                clustered += 1;
            }
        }
    }
    Ok(ClusterReport {
        groups: groups
            .into_iter()
            .map(|((book, cluster), members)| ClusterGroup { book, cluster, members })
            .collect(),
        clustered_words: clustered,
        top_n,
    })
}

fn model_slots(model: &CompactModel) -> Vec<Slot> {
    let v = model.mode.v();
    let mut slots = vec![None; v];
    for (i, &id) in model.unique_ids.iter().enumerate() {
        slots[id as usize - 1] = Some(Slot::Unique(i));
    }
    let mut next = 0;
    slots
        .into_iter()
        .map(|s| {
            s.unwrap_or_else(|| {
                next += 1;
                Slot::Clustered(next - 1)
            })
        })
        .collect()
}
