use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Ising minimization problem
/// `E(s) = sum_{i<j} J_ij s_i s_j + sum_i h_i s_i + offset` over `s in {-1,+1}^n`.
///
/// For `{0,1}` variables substitute `s = 2x - 1`; the result is a QUBO with
/// `Q_ij = 4 J_ij` (i<j), `Q_ii = 2 h_i - 2 sum_j J_ij` and constant
/// `offset - sum_i h_i + sum_{i<j} J_ij`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingInstance {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    offset: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl IsingInstance {
    /// Couplings may be given in any order and orientation; repeated pairs
    /// are summed and exact zeros dropped.
    pub fn new(
        n: usize,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
        fields: Vec<f64>,
        offset: f64,
    ) -> Result<Self> {
        if fields.len() != n {
            return Err(Error::InvalidArgument(format!("{} fields for {n} spins", fields.len())));
        }
        if fields.iter().any(|h| !h.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidArgument("fields and offset must be finite".into()));
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in couplings {
            if i == j || i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("invalid coupling ({i}, {j}) for {n} spins")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("coupling ({i}, {j}) is not finite")));
            }
            *merged.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
        }
        let couplings: Vec<_> = merged.into_iter().filter(|&(_, v)| v != 0.0).map(|((i, j), v)| (i, j, v)).collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, v) in &couplings {
            neighbors[i].push((j, v));
            neighbors[j].push((i, v));
        }
        Ok(IsingInstance { n, couplings, fields, offset, neighbors })
    }

    pub fn num_spins(&self) -> usize {
        self.n
    }

    /// Nonzero couplings `(i, j, J_ij)` with `i < j`, sorted.
    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.couplings
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map_or(0.0, |k| self.couplings[k].2)
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Largest absolute coefficient among couplings and fields.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.couplings
            .iter()
            .map(|c| c.2.abs())
            .chain(self.fields.iter().map(|h| h.abs()))
            .fold(0.0, f64::max)
    }

    pub fn energy(&self, spins: &[i8]) -> f64 {
        assert_eq!(spins.len(), self.n, "spin vector length");
        let quad: f64 = self.couplings.iter().map(|&(i, j, v)| v * f64::from(spins[i] * spins[j])).sum();
        let lin: f64 = self.fields.iter().zip(spins).map(|(h, &s)| h * f64::from(s)).sum();
        quad + lin + self.offset
    }

    /// `h_i + sum_j J_ij s_j`
    pub fn local_field(&self, i: usize, spins: &[i8]) -> f64 {
        self.fields[i] + self.neighbors[i].iter().map(|&(j, v)| v * f64::from(spins[j])).sum::<f64>()
    }

    /// Energy change from flipping spin `i`.
    pub fn flip_delta(&self, i: usize, spins: &[i8]) -> f64 {
        -2.0 * f64::from(spins[i]) * self.local_field(i, spins)
    }

    /// Same instance with every coefficient and the offset multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> IsingInstance {
        IsingInstance::new(
            self.n,
            self.couplings.iter().map(|&(i, j, v)| (i, j, v * factor)),
            self.fields.iter().map(|h| h * factor).collect(),
            self.offset * factor,
        )
        .expect("scaling keeps the instance valid")
    }

    /// Plain-text form: a header line `ising <n>`, then `offset <c>`, one
    /// `h <i> <value>` line per nonzero field and one `j <i> <k> <value>`
    /// line per nonzero coupling (`i < k`). `#` starts a comment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ising {}", self.n).unwrap();
        writeln!(out, "offset {:?}", self.offset).unwrap();
        for (i, &h) in self.fields.iter().enumerate() {
            if h != 0.0 {
                writeln!(out, "h {i} {h:?}").unwrap();
            }
        }
        for &(i, j, v) in &self.couplings {
            writeln!(out, "j {i} {j} {v:?}").unwrap();
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<IsingInstance> {
        let mut n = None;
        let mut offset = None;
        let mut fields: BTreeMap<usize, f64> = BTreeMap::new();
        let mut couplings: BTreeMap<(usize, usize), f64> = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let at = || format!("line {}", lineno + 1);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let args: Vec<&str> = tokens.collect();
            let expect = |count: usize| {
                if args.len() == count {
                    Ok(())
                } else {
                    Err(Error::parse(at(), format!("'{keyword}' takes {count} values, found {}", args.len())))
                }
            };
            let index = |s: &str| -> Result<usize> {
                let i: usize = s.parse().map_err(|_| Error::parse(at(), format!("bad index '{s}'")))?;
                match n {
                    Some(n) if i < n => Ok(i),
                    Some(n) => Err(Error::parse(at(), format!("index {i} out of range for {n} spins"))),
                    None => Err(Error::parse(at(), "entries before the 'ising' header")),
                }
            };
            let value = |s: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| Error::parse(at(), format!("bad number '{s}'")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(at(), "value is not finite"))
                }
            };
            match keyword {
                "ising" => {
                    expect(1)?;
                    if n.is_some() {
                        return Err(Error::parse(at(), "duplicate header"));
                    }
                    let count: usize =
                        args[0].parse().map_err(|_| Error::parse(at(), format!("bad spin count '{}'", args[0])))?;
                    if count > MAX_TEXT_SPINS {
                        return Err(Error::parse(at(), format!("spin count {count} exceeds {MAX_TEXT_SPINS}")));
                    }
                    n = Some(count);
                }
                "offset" => {
                    expect(1)?;
                    if offset.replace(value(args[0])?).is_some() {
                        return Err(Error::parse(at(), "duplicate offset"));
                    }
                }
                "h" => {
                    expect(2)?;
                    let i = index(args[0])?;
                    if fields.insert(i, value(args[1])?).is_some() {
                        return Err(Error::parse(at(), format!("duplicate field for spin {i}")));
                    }
                }
                "j" => {
                    expect(3)?;
                    let (i, k) = (index(args[0])?, index(args[1])?);
                    if i >= k {
                        return Err(Error::parse(at(), format!("coupling indices must satisfy i < k, got {i} {k}")));
                    }
                    if couplings.insert((i, k), value(args[2])?).is_some() {
                        return Err(Error::parse(at(), format!("duplicate coupling {i} {k}")));
                    }
                }
                other => return Err(Error::parse(at(), format!("unknown record '{other}'"))),
            }
        }

        let n = n.ok_or_else(|| Error::parse("end of input", "missing 'ising <n>' header"))?;
        let mut h = vec![0.0; n];
        for (i, v) in fields {
            h[i] = v;
        }
        IsingInstance::new(n, couplings.into_iter().map(|((i, k), v)| (i, k, v)), h, offset.unwrap_or(0.0))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<IsingInstance> {
        IsingInstance::parse_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Upper bound on the spin count accepted from text, to keep untrusted
/// headers from requesting huge allocations.
pub const MAX_TEXT_SPINS: usize = 1 << 20;
