use std::collections::BTreeMap;

use super::{bosdis, mi_matrix, posdis, specialization_ratio, topsim, MetricError, MiMatrix, ProtocolTable, Result};

/// Every protocol metric of one harvested table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: usize,
    pub posdis: f64,
    pub bosdis: f64,
    pub topsim: f64,
    pub topsim_degenerate: bool,
    pub mi: MiMatrix,
    /// One ratio per agent.
    pub specialization: Vec<f64>,
    pub threshold: f64,
    pub compositional: bool,
}

impl MetricReport {
    pub fn compute(table: &ProtocolTable, threshold: f64) -> Result<Self> {
        let pd = posdis(table)?;
        let ts = topsim(table, 0)?;
        let specialization = (0..table.n_agents())
            .map(|a| specialization_ratio(table, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricReport {
            rows: table.rows(),
            posdis: pd,
            bosdis: bosdis(table)?,
            topsim: ts.value,
            topsim_degenerate: ts.degenerate,
            mi: mi_matrix(table),
            specialization,
            threshold,
            compositional: pd > threshold,
        })
    }

    /// Flat `key=value` lines in a fixed order. Floats use the shortest
    /// representation that reads back to the same bits.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        put("rows", self.rows.to_string());
        put("posdis", self.posdis.to_string());
        put("bosdis", self.bosdis.to_string());
        put("topsim", self.topsim.to_string());
        put("topsim_degenerate", self.topsim_degenerate.to_string());
        put("threshold", self.threshold.to_string());
        put("compositional", self.compositional.to_string());
        put("mi.positions", self.mi.positions.to_string());
        put("mi.attributes", self.mi.attributes.to_string());
        for k in 0..self.mi.positions {
            for j in 0..self.mi.attributes {
                put(&format!("mi.{k}.{j}"), self.mi.get(k, j).to_string());
            }
        }
        put("agents", self.specialization.len().to_string());
        for (a, s) in self.specialization.iter().enumerate() {
            put(&format!("specialization.{a}"), s.to_string());
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        fn get<T: std::str::FromStr>(map: &BTreeMap<&str, &str>, k: &str) -> Result<T> {
            map.get(k)
                .ok_or_else(|| MetricError::Report(format!("missing {k}")))?
                .parse()
                .map_err(|_| MetricError::Report(format!("bad value for {k}")))
        }
        let positions: usize = get(&map, "mi.positions")?;
        let attributes: usize = get(&map, "mi.attributes")?;
        let mut values = Vec::with_capacity(positions * attributes);
        for k in 0..positions {
            for j in 0..attributes {
                values.push(get(&map, &format!("mi.{k}.{j}"))?);
            }
        }
        let agents: usize = get(&map, "agents")?;
        Ok(MetricReport {
            rows: get(&map, "rows")?,
            posdis: get(&map, "posdis")?,
            bosdis: get(&map, "bosdis")?,
            topsim: get(&map, "topsim")?,
            topsim_degenerate: get(&map, "topsim_degenerate")?,
            mi: MiMatrix { positions, attributes, values },
            specialization: (0..agents).map(|a| get(&map, &format!("specialization.{a}"))).collect::<Result<_>>()?,
            threshold: get(&map, "threshold")?,
            compositional: get(&map, "compositional")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let s: Vec<Vec<usize>> = (0..25).map(|i| vec![i / 5, (i * 3) % 5, i % 5, 0]).collect();
        let a: Vec<Vec<usize>> = (0..25).map(|i| vec![i / 5, i % 5]).collect();
        let t = ProtocolTable::new(s, a, vec!["p".into(), "q".into()], 5, 5, 2).unwrap();
        let r = MetricReport::compute(&t, 0.4).unwrap();
        let back = MetricReport::from_kv(&r.to_kv()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_kv(), r.to_kv());
    }
}
