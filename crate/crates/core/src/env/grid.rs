use super::{EnvError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub bins: Vec<f64>,
}

/// Ordered latent properties, each discretised into the same number of bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyGrid {
    properties: Vec<Property>,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

impl PropertyGrid {
    pub fn new(properties: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if properties.is_empty() {
            return Err(EnvError::InvalidGrid("no properties".into()));
        }
        let n = properties[0].1.len();
        for (name, bins) in &properties {
            if bins.len() != n {
                return Err(EnvError::InvalidGrid(format!(
                    "property `{name}` has {} bins, expected {n}",
                    bins.len()
                )));
            }
            if bins.len() < 2 {
                return Err(EnvError::InvalidGrid(format!("property `{name}` needs at least 2 bins")));
            }
            if bins.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(EnvError::InvalidGrid(format!("bins of `{name}` not strictly increasing")));
            }
        }
        Ok(PropertyGrid {
            properties: properties
                .into_iter()
                .map(|(name, bins)| Property { name, bins })
                .collect(),
        })
    }

    /// Stiffness over [1, 10] and damping over [0.1, 2.0], five bins each.
    pub fn spring_mass() -> Self {
        Self::new(vec![
            ("stiffness".into(), linspace(1.0, 10.0, 5)),
            ("damping".into(), linspace(0.1, 2.0, 5)),
        ])
        .expect("static grid")
    }

    pub fn ramp() -> Self {
        let v = vec![0.1, 0.3, 0.5, 0.7, 0.9];
        Self::new(vec![("elasticity".into(), v.clone()), ("friction".into(), v)]).expect("static grid")
    }

    pub fn collision() -> Self {
        Self::new(vec![
            ("mass_ratio".into(), vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            ("restitution".into(), vec![0.1, 0.3, 0.5, 0.7, 0.9]),
        ])
        .expect("static grid")
    }

    /// Numerosity 2..=6 shapes and mean shape radius.
    pub fn abstract_scenes() -> Self {
        Self::new(vec![
            ("numerosity".into(), vec![2.0, 3.0, 4.0, 5.0, 6.0]),
            ("mean_size".into(), vec![0.04, 0.06, 0.08, 0.10, 0.12]),
        ])
        .expect("static grid")
    }

    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn bins_per_property(&self) -> usize {
        self.properties[0].bins.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.properties.iter().map(|p| p.name.clone()).collect()
    }

    pub fn value(&self, property: usize, bin: usize) -> f64 {
        self.properties[property].bins[bin]
    }

    pub fn values(&self, bins: &[usize]) -> Vec<f64> {
        bins.iter().enumerate().map(|(p, b)| self.value(p, *b)).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }
}
