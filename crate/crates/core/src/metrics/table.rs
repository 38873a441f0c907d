use super::{MetricError, Result};

/// One row per scene: the eval-mode symbol at every message position
/// (agent-major) and the scene's attribute bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTable {
    pub symbols: Vec<Vec<usize>>,
    pub attributes: Vec<Vec<usize>>,
    pub attribute_names: Vec<String>,
    pub vocab: usize,
    pub bins: usize,
    /// Positions per agent; `positions() / k` agents.
    pub k: usize,
}

impl ProtocolTable {
    pub fn new(
        symbols: Vec<Vec<usize>>,
        attributes: Vec<Vec<usize>>,
        attribute_names: Vec<String>,
        vocab: usize,
        bins: usize,
        k: usize,
    ) -> Result<Self> {
        if symbols.is_empty() {
            return Err(MetricError::EmptyTable);
        }
        if symbols.len() != attributes.len() {
            return Err(MetricError::Shape(format!("{} symbol rows vs {} attribute rows", symbols.len(), attributes.len())));
        }
        let (np, na) = (symbols[0].len(), attributes[0].len());
        if symbols.iter().any(|r| r.len() != np) || attributes.iter().any(|r| r.len() != na) {
            return Err(MetricError::Shape("rows differ in length".into()));
        }
        if attribute_names.len() != na {
            return Err(MetricError::Shape(format!("{} names for {na} attributes", attribute_names.len())));
        }
        if k == 0 || np % k != 0 {
            return Err(MetricError::Shape(format!("{np} positions not divisible into agents of {k}")));
        }
        for row in &symbols {
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, v)| **v >= vocab) {
                return Err(MetricError::OutOfRange { column: c, value: v });
            }
        }
        for row in &attributes {
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, v)| **v >= bins) {
                return Err(MetricError::OutOfRange { column: np + c, value: v });
            }
        }
        Ok(ProtocolTable { symbols, attributes, attribute_names, vocab, bins, k })
    }

    /// Table with attributes named `a0, a1, ...` and every position in one agent.
    pub fn unnamed(symbols: Vec<Vec<usize>>, attributes: Vec<Vec<usize>>, vocab: usize, bins: usize) -> Result<Self> {
        let na = attributes.first().map_or(0, |r| r.len());
        let np = symbols.first().map_or(1, |r| r.len()).max(1);
        ProtocolTable::new(symbols, attributes, (0..na).map(|j| format!("a{j}")).collect(), vocab, bins, np)
    }

    pub fn rows(&self) -> usize {
        self.symbols.len()
    }

    pub fn positions(&self) -> usize {
        self.symbols[0].len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes[0].len()
    }

    pub fn n_agents(&self) -> usize {
        self.positions() / self.k
    }

    pub fn position_column(&self, k: usize) -> Vec<usize> {
        self.symbols.iter().map(|r| r[k]).collect()
    }

    pub fn attribute_column(&self, j: usize) -> Vec<usize> {
        self.attributes.iter().map(|r| r[j]).collect()
    }

    /// Header `pos0,...,posM,<attribute names>`; vocab, bins and k go in a
    /// leading comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# vocab={} bins={} k={}\n", self.vocab, self.bins, self.k);
        let mut header: Vec<String> = (0..self.positions()).map(|p| format!("pos{p}")).collect();
        header.extend(self.attribute_names.iter().cloned());
        out.push_str(&header.join(","));
        out.push('\n');
        for (s, a) in self.symbols.iter().zip(&self.attributes) {
            let cells: Vec<String> = s.iter().chain(a).map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| MetricError::Csv(m);
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let meta = meta.strip_prefix("# ").ok_or_else(|| bad("missing metadata line".into()))?;
        let (mut vocab, mut bins, mut k) = (None, None, None);
        for kv in meta.split_whitespace() {
            let (key, v) = kv.split_once('=').ok_or_else(|| bad(format!("bad metadata {kv:?}")))?;
            let v: usize = v.parse().map_err(|_| bad(format!("bad metadata {kv:?}")))?;
            match key {
                "vocab" => vocab = Some(v),
                "bins" => bins = Some(v),
                "k" => k = Some(v),
                _ => return Err(bad(format!("unknown metadata key {key:?}"))),
            }
        }
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
        let np = header.iter().take_while(|h| h.starts_with("pos")).count();
        let names: Vec<String> = header[np..].iter().map(|s| s.to_string()).collect();
        let (mut symbols, mut attributes) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let cells = line
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if cells.len() != header.len() {
                return Err(bad(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len())));
            }
            symbols.push(cells[..np].to_vec());
            attributes.push(cells[np..].to_vec());
        }
        let need = |o: Option<usize>, n: &str| o.ok_or_else(|| bad(format!("metadata lacks {n}")));
        ProtocolTable::new(symbols, attributes, names, need(vocab, "vocab")?, need(bins, "bins")?, need(k, "k")?)
    }
}
