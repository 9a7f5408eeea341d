use std::collections::BTreeMap;

use crate::error::Result;

use super::{ElementStatus, Engine, QueueStats, SiteTally};

impl Engine {
    /// Counts over the current elements of one site, or of every site.
    pub fn stats(&self, site_id: Option<&str>) -> Result<QueueStats> {
        if let Some(site_id) = site_id {
            self.site(site_id)?;
        }
        let elements = self.elements_where(|r| site_id.is_none_or(|s| r.str_field("site_id") == Some(s)))?;
        let mut stats = QueueStats {
            total_submitted: 0,
            accepted: 0,
            declined: 0,
            pending: 0,
            acceptance_rate: 0.0,
            per_type: BTreeMap::new(),
        };
        for element in &elements {
            stats.total_submitted += 1;
            let tally = stats.per_type.entry(element.type_id.clone()).or_default();
            tally.submitted += 1;
            match element.status {
                ElementStatus::Accepted => {
                    stats.accepted += 1;
                    tally.accepted += 1;
                }
                ElementStatus::Declined => stats.declined += 1,
                ElementStatus::Pending => stats.pending += 1,
            }
        }
        stats.acceptance_rate = stats.accepted as f64 / stats.total_submitted.max(1) as f64;
        Ok(stats)
    }

    /// Sites ranked by accepted elements, most first; ties by site id.
    pub fn top_sites(&self, limit: usize) -> Result<Vec<SiteTally>> {
        let mut tallies: BTreeMap<String, SiteTally> = self
            .sites()?
            .into_iter()
            .map(|s| (s.site_id.clone(), SiteTally { site_id: s.site_id, submitted: 0, accepted: 0 }))
            .collect();
        for element in self.elements_where(|_| true)? {
            let tally = tallies.entry(element.site_id.clone()).or_insert_with(|| SiteTally {
                site_id: element.site_id.clone(),
                submitted: 0,
                accepted: 0,
            });
            tally.submitted += 1;
            if element.status == ElementStatus::Accepted {
                tally.accepted += 1;
            }
        }
        let mut ranked: Vec<SiteTally> = tallies.into_values().collect();
        ranked.sort_by(|a, b| b.accepted.cmp(&a.accepted).then_with(|| a.site_id.cmp(&b.site_id)));
        ranked.truncate(limit);
        Ok(ranked)
    }
}
