use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::knowledge::{ItemId, KnowledgeSnapshot};
use crate::logic::{graph_degree_stats, DegreeStats};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    /// tag id → number of items carrying it.
    pub tag_frequency: BTreeMap<u32, u64>,
    /// tags per item → number of items.
    pub tags_per_item: BTreeMap<usize, u64>,
    pub u2i_degree: DegreeStats,
    pub i2u_degree: DegreeStats,
}

impl KbStats {
    pub fn total_assignments(&self) -> u64 {
        self.tag_frequency.values().sum()
    }

    /// Long-format CSV: `section,key,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,key,value\n");
        let mut rows = |section: &str, it: &mut dyn Iterator<Item = (String, String)>| {
            for (k, v) in it {
                let _ = writeln!(out, "{section},{k},{v}");
            }
        };
        rows("tag_frequency", &mut self.tag_frequency.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        rows("tags_per_item", &mut self.tags_per_item.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        for (name, d) in [("u2i", &self.u2i_degree), ("i2u", &self.i2u_degree)] {
            rows(
                &format!("{name}_out_degree"),
                &mut d.out_degree.iter().map(|(k, v)| (k.to_string(), v.to_string())),
            );
            rows(
                &format!("{name}_in_degree"),
                &mut d.in_degree.iter().map(|(k, v)| (k.to_string(), v.to_string())),
            );
        }
        out
    }
}

pub fn kb_stats(snapshot: &KnowledgeSnapshot, mapping: &BTreeMap<ItemId, BTreeSet<u32>>) -> KbStats {
    let mut s = KbStats {
        u2i_degree: graph_degree_stats(snapshot.g_u2i()),
        i2u_degree: graph_degree_stats(snapshot.g_i2u()),
        ..Default::default()
    };
    for tags in mapping.values() {
        *s.tags_per_item.entry(tags.len()).or_insert(0) += 1;
        for &t in tags {
            *s.tag_frequency.entry(t).or_insert(0) += 1;
        }
    }
    s
}
