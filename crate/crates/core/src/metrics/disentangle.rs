use super::{MetricError, ProtocolTable, Result};

/// Stabilizer in every gap ratio.
pub const EPS: f64 = 1e-8;

/// Plug-in MI of two discrete columns, in nats. Zero-count cells contribute
/// nothing; product-form counts give exactly 0.
pub fn mutual_information(xs: &[usize], ys: &[usize]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "mutual_information column lengths");
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let nx = xs.iter().max().unwrap() + 1;
    let ny = ys.iter().max().unwrap() + 1;
    let mut joint = vec![0usize; nx * ny];
    let mut cx = vec![0usize; nx];
    let mut cy = vec![0usize; ny];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * ny + y] += 1;
        cx[x] += 1;
        cy[y] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let c = joint[x * ny + y];
            if c == 0 {
                continue;
            }
            // integer products keep independent tables at exactly ln(1)
            let ratio = (c as f64 * nf) / (cx[x] as f64 * cy[y] as f64);
            mi += c as f64 / nf * ratio.ln();
        }
    }
    mi.max(0.0)
}

pub fn discrete_mi(table: &ProtocolTable, position: usize, attribute: usize) -> f64 {
    mutual_information(&table.position_column(position), &table.attribute_column(attribute))
}

/// `[positions x attributes]` MI matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    pub positions: usize,
    pub attributes: usize,
    pub values: Vec<f64>,
}

impl MiMatrix {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.attributes + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.attributes..(k + 1) * self.attributes]
    }

    /// Total MI per attribute, summed over positions.
    pub fn attribute_totals(&self) -> Vec<f64> {
        (0..self.attributes).map(|j| (0..self.positions).map(|k| self.get(k, j)).sum()).collect()
    }

    /// Dense CSV, one row per position.
    pub fn to_csv(&self, attribute_names: &[String]) -> String {
        let mut out = format!("position,{}\n", attribute_names.join(","));
        for k in 0..self.positions {
            let cells: Vec<String> = self.row(k).iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{k},{}\n", cells.join(",")));
        }
        out
    }
}

pub fn mi_matrix(table: &ProtocolTable) -> MiMatrix {
    let (np, na) = (table.positions(), table.n_attributes());
    let attrs: Vec<Vec<usize>> = (0..na).map(|j| table.attribute_column(j)).collect();
    let mut values = Vec::with_capacity(np * na);
    for k in 0..np {
        let col = table.position_column(k);
        values.extend(attrs.iter().map(|a| mutual_information(&col, a)));
    }
    MiMatrix { positions: np, attributes: na, values }
}

/// `(max - second max) / (max + EPS)`.
pub fn gap_ratio(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(MetricError::TooFewAttributes(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok((sorted[0] - sorted[1]) / (sorted[0] + EPS))
}

/// Positional disentanglement averaged over every position of the bundle.
pub fn posdis(table: &ProtocolTable) -> Result<f64> {
    if table.n_attributes() < 2 {
        return Err(MetricError::TooFewAttributes(table.n_attributes()));
    }
    let m = mi_matrix(table);
    let mut total = 0.0;
    for k in 0..m.positions {
        total += gap_ratio(m.row(k))?;
    }
    Ok(total / m.positions as f64)
}

/// Bag-of-symbols disentanglement: the gap ratio of each symbol's
/// occurrence-count variable, averaged over symbols carrying any
/// information.
pub fn bosdis(table: &ProtocolTable) -> Result<f64> {
    let na = table.n_attributes();
    if na < 2 {
        return Err(MetricError::TooFewAttributes(na));
    }
    let attrs: Vec<Vec<usize>> = (0..na).map(|j| table.attribute_column(j)).collect();
    let (mut total, mut used) = (0.0, 0usize);
    for s in 0..table.vocab {
        let counts: Vec<usize> = table.symbols.iter().map(|r| r.iter().filter(|v| **v == s).count()).collect();
        let mis: Vec<f64> = attrs.iter().map(|a| mutual_information(&counts, a)).collect();
        if mis.iter().all(|m| *m <= 0.0) {
            continue;
        }
        total += gap_ratio(&mis)?;
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { total / used as f64 })
}

/// Gap ratio over the attribute MI totals of one agent's `k` positions.
pub fn specialization_ratio(table: &ProtocolTable, agent: usize) -> Result<f64> {
    let m = mi_matrix(table);
    let totals: Vec<f64> = (0..m.attributes)
        .map(|j| (agent * table.k..(agent + 1) * table.k).map(|k| m.get(k, j)).sum())
        .collect();
    gap_ratio(&totals)
}

/// Fraction of runs whose PosDis is strictly above `threshold`.
pub fn compositional_rate(posdis_values: &[f64], threshold: f64) -> f64 {
    if posdis_values.is_empty() {
        return 0.0;
    }
    posdis_values.iter().filter(|p| **p > threshold).count() as f64 / posdis_values.len() as f64
}
