//! Set partitioning instances: data model, deterministic generator and the
//! plain-text file format.
//!
//! An instance has `m_items` rows (items that must be covered exactly once)
//! and `n_vars` columns (candidate sets), each with an integer cost. The
//! file format is line oriented:
//!
//! ```text
//! # name: I8-12-0.3-7
//! <n_vars> <m_items>
//! <cost> <k> <item_1> ... <item_k>      (one line per variable)
//! ```
//!
//! Lines starting with `#` are comments; a `# name: <id>` comment carries
//! the instance name.

use std::fmt;

use thiserror::Error;

/// Index of an item (row / constraint).
pub type ItemId = u32;
/// Index of a variable (column / set).
pub type VarId = u32;

const NAME_TAG: &str = "name:";
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SppInstance {
    pub name: String,
    pub m_items: usize,
    pub costs: Vec<u64>,
    /// Per variable, the strictly ascending list of covered items.
    pub columns: Vec<Vec<ItemId>>,
    /// Per item, the ascending list of variables covering it. Always the
    /// transpose of `columns` for instances built through [`SppInstance::new`].
    pub rows: Vec<Vec<VarId>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("instance must have at least one item")]
    NoItems,
    #[error("{costs} costs given for {columns} columns")]
    CostCountMismatch { costs: usize, columns: usize },
    #[error("column {var} is empty")]
    EmptyColumn { var: VarId },
    #[error("column {var} covers item {item}, outside [0, {m_items})")]
    ItemOutOfRange { var: VarId, item: ItemId, m_items: usize },
    #[error("column {var} is not strictly ascending")]
    NotAscending { var: VarId },
    #[error("inclusion probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("cost range [{min}, {max}] is empty")]
    InvalidCostRange { min: u64, max: u64 },
    #[error("line {line}: {cause}")]
    Parse { line: usize, cause: ParseCause },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseCause {
    #[error("missing header line `<n_vars> <m_items>`")]
    MissingHeader,
    #[error("malformed header, expected `<n_vars> <m_items>`")]
    BadHeader,
    #[error("invalid number `{0}`")]
    BadNumber(String),
    #[error("column declares {declared} items but lists {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("duplicate item {0} in column")]
    DuplicateItem(ItemId),
    #[error("item {item} out of range [0, {m_items})")]
    ItemOutOfRange { item: ItemId, m_items: usize },
    #[error("empty column")]
    EmptyColumn,
    #[error("expected {expected} column lines, found {found}")]
    MissingColumns { expected: usize, found: usize },
    #[error("unexpected column line beyond the declared {0} variables")]
    ExtraColumns(usize),
    #[error("instance must have at least one item")]
    NoItems,
}

impl SppInstance {
    /// Builds an instance, checking the structural invariants and deriving
    /// the row index.
    pub fn new(
        name: impl Into<String>,
        m_items: usize,
        costs: Vec<u64>,
        columns: Vec<Vec<ItemId>>,
    ) -> Result<Self, InstanceError> {
        if m_items == 0 {
            return Err(InstanceError::NoItems);
        }
        if costs.len() != columns.len() {
            return Err(InstanceError::CostCountMismatch {
                costs: costs.len(),
                columns: columns.len(),
            });
        }
        for (var, col) in columns.iter().enumerate() {
            let var = var as VarId;
            if col.is_empty() {
                return Err(InstanceError::EmptyColumn { var });
            }
            if let Some(&item) = col.iter().find(|&&it| it as usize >= m_items) {
                return Err(InstanceError::ItemOutOfRange { var, item, m_items });
            }
            if col.windows(2).any(|w| w[0] >= w[1]) {
                return Err(InstanceError::NotAscending { var });
            }
        }
        let rows = transpose(m_items, &columns);
        Ok(Self {
            name: name.into(),
            m_items,
            costs,
            columns,
            rows,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    /// Total number of nonzero coefficients.
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Checks every invariant and lists all violations. Uncovered items are
    /// reported too; they make the partitioning problem infeasible.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if self.m_items == 0 {
            issues.push(Violation::NoItems);
        }
        if self.costs.len() != self.columns.len() {
            issues.push(Violation::CostCountMismatch {
                costs: self.costs.len(),
                columns: self.columns.len(),
            });
        }
        for (var, col) in self.columns.iter().enumerate() {
            let var = var as VarId;
            if col.is_empty() {
                issues.push(Violation::EmptyColumn { var });
            }
            for &item in col {
                if item as usize >= self.m_items {
                    issues.push(Violation::ItemOutOfRange { var, item });
                }
            }
            if col.windows(2).any(|w| w[0] >= w[1]) {
                issues.push(Violation::NotAscending { var });
            }
        }
        if self.rows.len() != self.m_items {
            issues.push(Violation::RowIndexLength {
                rows: self.rows.len(),
                m_items: self.m_items,
            });
        }
        let expected = transpose(self.m_items, &self.columns);
        for (item, (have, want)) in self.rows.iter().zip(&expected).enumerate() {
            if have != want {
                issues.push(Violation::TransposeMismatch { item: item as ItemId });
            }
        }
        for (item, covering) in expected.iter().enumerate() {
            if covering.is_empty() {
                issues.push(Violation::UncoveredItem { item: item as ItemId });
            }
        }
        ValidationReport { issues }
    }

    /// True when the chosen variables cover every item exactly once.
    pub fn is_partition(&self, vars: &[VarId]) -> bool {
        let mut hit = vec![false; self.m_items];
        for &v in vars {
            let Some(col) = self.columns.get(v as usize) else {
                return false;
            };
            for &item in col {
                let slot = &mut hit[item as usize];
                if *slot {
                    return false;
                }
                *slot = true;
            }
        }
        hit.into_iter().all(|h| h)
    }

    pub fn cost_of(&self, vars: &[VarId]) -> u64 {
        vars.iter().map(|&v| self.costs[v as usize]).sum()
    }

    /// Parses the text format. Items inside a column may appear in any
    /// order; they are sorted on input.
    pub fn parse(text: &str) -> Result<Self, InstanceError> {
        let err = |line: usize, cause: ParseCause| InstanceError::Parse { line, cause };
        let mut name = String::new();
        let mut header: Option<(usize, usize)> = None;
        let mut costs = Vec::new();
        let mut columns = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(rest) = comment.trim_start().strip_prefix(NAME_TAG) {
                    name = rest.trim().to_string();
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let Some((n_vars, m_items)) = header else {
                let n = parse_num::<usize>(fields.next(), line_no)?;
                let m = parse_num::<usize>(fields.next(), line_no)?;
                if fields.next().is_some() {
                    return Err(err(line_no, ParseCause::BadHeader));
                }
                if m == 0 {
                    return Err(err(line_no, ParseCause::NoItems));
                }
                header = Some((n, m));
                continue;
            };
            if columns.len() == n_vars {
                return Err(err(line_no, ParseCause::ExtraColumns(n_vars)));
            }
            let cost = parse_num::<u64>(fields.next(), line_no)?;
            let declared = parse_num::<usize>(fields.next(), line_no)?;
            let mut col = fields
                .map(|f| parse_num::<ItemId>(Some(f), line_no))
                .collect::<Result<Vec<_>, _>>()?;
            if col.len() != declared {
                return Err(err(
                    line_no,
                    ParseCause::CountMismatch {
                        declared,
                        found: col.len(),
                    },
                ));
            }
            if col.is_empty() {
                return Err(err(line_no, ParseCause::EmptyColumn));
            }
            if let Some(&item) = col.iter().find(|&&it| it as usize >= m_items) {
                return Err(err(line_no, ParseCause::ItemOutOfRange { item, m_items }));
            }
            col.sort_unstable();
            if let Some(w) = col.windows(2).find(|w| w[0] == w[1]) {
                return Err(err(line_no, ParseCause::DuplicateItem(w[0])));
            }
            costs.push(cost);
            columns.push(col);
        }

        let last_line = text.lines().count();
        let Some((n_vars, m_items)) = header else {
            return Err(err(last_line, ParseCause::MissingHeader));
        };
        if columns.len() != n_vars {
            return Err(err(
                last_line,
                ParseCause::MissingColumns {
                    expected: n_vars,
                    found: columns.len(),
                },
            ));
        }
        Self::new(name, m_items, costs, columns)
    }

    /// Canonical text form: optional name comment, header, one column per
    /// line with ascending items and single spaces.
    pub fn serialize(&self) -> Result<String, InstanceError> {
        // Re-run the structural checks so a hand-mutated instance never
        // reaches disk.
        Self::new(
            self.name.clone(),
            self.m_items,
            self.costs.clone(),
            self.columns.clone(),
        )?;
        let mut out = String::new();
        if !self.name.is_empty() {
            out.push_str(&format!("# {NAME_TAG} {}\n", self.name));
        }
        out.push_str(&format!("{} {}\n", self.n_vars(), self.m_items));
        for (cost, col) in self.costs.iter().zip(&self.columns) {
            out.push_str(&format!("{cost} {}", col.len()));
            for item in col {
                out.push_str(&format!(" {item}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn parse_num<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T, InstanceError> {
    let Some(f) = field else {
        return Err(InstanceError::Parse {
            line,
            cause: ParseCause::BadHeader,
        });
    };
    f.parse().map_err(|_| InstanceError::Parse {
        line,
        cause: ParseCause::BadNumber(f.to_string()),
    })
}

fn transpose(m_items: usize, columns: &[Vec<ItemId>]) -> Vec<Vec<VarId>> {
    let mut rows = vec![Vec::new(); m_items];
    for (var, col) in columns.iter().enumerate() {
        for &item in col {
            if let Some(row) = rows.get_mut(item as usize) {
                row.push(var as VarId);
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoItems,
    CostCountMismatch { costs: usize, columns: usize },
    EmptyColumn { var: VarId },
    ItemOutOfRange { var: VarId, item: ItemId },
    NotAscending { var: VarId },
    RowIndexLength { rows: usize, m_items: usize },
    TransposeMismatch { item: ItemId },
    UncoveredItem { item: ItemId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoItems => write!(f, "instance has no items"),
            Violation::CostCountMismatch { costs, columns } => {
                write!(f, "{costs} costs for {columns} columns")
            }
            Violation::EmptyColumn { var } => write!(f, "column {var} is empty"),
            Violation::ItemOutOfRange { var, item } => {
                write!(f, "column {var} covers out-of-range item {item}")
            }
            Violation::NotAscending { var } => write!(f, "column {var} is not strictly ascending"),
            Violation::RowIndexLength { rows, m_items } => {
                write!(f, "row index has {rows} entries for {m_items} items")
            }
            Violation::TransposeMismatch { item } => {
                write!(f, "row index of item {item} disagrees with the columns")
            }
            Violation::UncoveredItem { item } => write!(f, "item {item} is not covered by any column"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn uncovered_items(&self) -> Vec<ItemId> {
        self.issues
            .iter()
            .filter_map(|v| match v {
                Violation::UncoveredItem { item } => Some(*item),
                _ => None,
            })
            .collect()
    }
}

/// 64-bit linear congruential generator with Knuth's MMIX constants. Kept
/// hand-written so generated instances are bit-identical in any language.
#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `(top 32 bits) mod n`; `n` must be nonzero.
    pub fn next_below(&mut self, n: u64) -> u64 {
        (self.next_u64() >> 32) % n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub m_items: usize,
    pub n_vars: usize,
    pub p: f64,
    pub seed: u64,
    pub ensure_coverage: bool,
    pub cost_min: u64,
    pub cost_max: u64,
}

impl GeneratorParams {
    pub fn new(m_items: usize, n_vars: usize, p: f64, seed: u64) -> Self {
        Self {
            m_items,
            n_vars,
            p,
            seed,
            ensure_coverage: true,
            cost_min: 1,
            cost_max: 100,
        }
    }

    pub fn name(&self) -> String {
        format!("I{}-{}-{}-{}", self.m_items, self.n_vars, self.p, self.seed)
    }

    pub fn file_name(&self) -> String {
        format!("{}.spp", self.name())
    }
}

/// Draws a random instance.
///
/// Variables are generated in order; for each one every item is included
/// independently with probability `p`, an empty column is redrawn, and the
/// cost is drawn afterwards from `[cost_min, cost_max]`. With
/// `ensure_coverage`, each uncovered item gets an extra singleton column at
/// the maximum cost.
pub fn generate(params: &GeneratorParams) -> Result<SppInstance, InstanceError> {
    if !(0.0..=1.0).contains(&params.p) || params.p.is_nan() {
        return Err(InstanceError::InvalidProbability(params.p));
    }
    if params.cost_min > params.cost_max {
        return Err(InstanceError::InvalidCostRange {
            min: params.cost_min,
            max: params.cost_max,
        });
    }
    if params.m_items == 0 {
        return Err(InstanceError::NoItems);
    }
    let m = params.m_items;
    let span = params.cost_max - params.cost_min + 1;
    let mut rng = Lcg64::new(params.seed);
    let mut costs = Vec::with_capacity(params.n_vars);
    let mut columns = Vec::with_capacity(params.n_vars);

    for _ in 0..params.n_vars {
        let mut col = Vec::new();
        for _ in 0..MAX_REDRAWS {
            col.clear();
            col.extend((0..m as ItemId).filter(|_| rng.next_f64() < params.p));
            if !col.is_empty() {
                break;
            }
        }
        if col.is_empty() {
            // Degenerate p (e.g. 0): fall back to one uniformly drawn item.
            col.push(rng.next_below(m as u64) as ItemId);
        }
        costs.push(params.cost_min + rng.next_below(span));
        columns.push(col);
    }

    if params.ensure_coverage {
        let mut covered = vec![false; m];
        for col in &columns {
            for &item in col {
                covered[item as usize] = true;
            }
        }
        for (item, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
            costs.push(params.cost_max);
            columns.push(vec![item as ItemId]);
        }
    }

    SppInstance::new(params.name(), m, costs, columns)
}

/// Fields recovered from a conventional instance name such as
/// `I90-400-0.03` or `I200-650-0.02-100`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceName {
    pub m_items: usize,
    pub n_vars: usize,
    pub p: f64,
    pub seed: Option<u64>,
}

pub fn parse_instance_name(name: &str) -> Option<InstanceName> {
    let stem = name.strip_suffix(".spp").unwrap_or(name);
    let body = stem.strip_prefix('I')?;
    let parts: Vec<&str> = body.split('-').collect();
    if !(3..=4).contains(&parts.len()) {
        return None;
    }
    let p: f64 = parts[2].parse().ok()?;
    if !(0.0..=1.0).contains(&p) {
        return None;
    }
    Some(InstanceName {
        m_items: parts[0].parse().ok()?,
        n_vars: parts[1].parse().ok()?,
        p,
        seed: match parts.get(3) {
            Some(s) => Some(s.parse().ok()?),
            None => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> SppInstance {
        SppInstance::new("tiny", 2, vec![4, 1, 3], vec![vec![0, 1], vec![0], vec![1]]).unwrap()
    }

    #[test]
    fn conventional_names_parse() {
        let n = parse_instance_name("I90-400-0.03").unwrap();
        assert_eq!((n.m_items, n.n_vars, n.p, n.seed), (90, 400, 0.03, None));
        let n = parse_instance_name("I200-650-0.02-100").unwrap();
        assert_eq!(n.seed, Some(100));
        assert!(parse_instance_name("X90-400-0.03").is_none());
        assert!(parse_instance_name("I90-400-1.5").is_none());
    }

    #[test]
    fn generated_name_follows_convention() {
        let params = GeneratorParams::new(90, 400, 0.03, 1);
        assert_eq!(params.file_name(), "I90-400-0.03-1.spp");
        let parsed = parse_instance_name(&params.name()).unwrap();
        assert_eq!(parsed.seed, Some(1));
    }

    #[test]
    fn full_probability_gives_full_columns() {
        let inst = generate(&GeneratorParams::new(3, 4, 1.0, 99)).unwrap();
        assert_eq!(inst.n_vars(), 4);
        assert!(inst.columns.iter().all(|c| c == &vec![0, 1, 2]));
    }

    #[test]
    fn generator_is_deterministic() {
        let params = GeneratorParams::new(8, 12, 0.3, 7);
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert!(a.validate().is_clean());
        assert_eq!(a.serialize().unwrap(), b.serialize().unwrap());
        let other = generate(&GeneratorParams::new(8, 12, 0.3, 8)).unwrap();
        assert_ne!(a.serialize().unwrap(), other.serialize().unwrap());
    }

    #[test]
    fn lcg_matches_reference_sequence() {
        // state1 = 1 * a + c, computed by hand with wrapping arithmetic.
        let mut rng = Lcg64::new(1);
        let first = rng.next_u64();
        assert_eq!(first, Lcg64::MULTIPLIER.wrapping_add(Lcg64::INCREMENT));
        let u = Lcg64::new(0).next_f64();
        assert_eq!(u, (Lcg64::INCREMENT >> 11) as f64 / 9007199254740992.0);
    }

    #[test]
    fn bad_probability_rejected() {
        assert!(matches!(
            generate(&GeneratorParams::new(3, 3, 1.2, 0)),
            Err(InstanceError::InvalidProbability(_))
        ));
        assert!(generate(&GeneratorParams::new(3, 3, -0.1, 0)).is_err());
    }

    #[test]
    fn zero_probability_still_terminates() {
        let inst = generate(&GeneratorParams::new(4, 5, 0.0, 3)).unwrap();
        assert!(inst.columns[..5].iter().all(|c| c.len() == 1));
        assert!(inst.validate().is_clean());
        // repair columns are singletons at the maximum cost
        assert!(inst.costs[5..].iter().all(|&c| c == 100));
    }

    #[test]
    fn header_and_column_mapping() {
        let inst = SppInstance::parse("2 3\n4 2 0 1\n1 1 0\n3 1 1\n").unwrap_err();
        // header is `<n_vars> <m_items>`: 2 vars but 3 column lines
        assert!(matches!(
            inst,
            InstanceError::Parse {
                cause: ParseCause::ExtraColumns(2),
                ..
            }
        ));
        let inst = SppInstance::parse("3 2\n4 2 0 1\n1 1 0\n3 1 1\n").unwrap();
        assert_eq!((inst.n_vars(), inst.m_items), (3, 2));
        assert_eq!(inst.costs[0], 4);
        assert_eq!(inst.columns[0], vec![0, 1]);
        assert_eq!(inst.rows, vec![vec![0, 1], vec![0, 2]]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dup = SppInstance::parse("1 3\n5 2 1 1\n").unwrap_err();
        assert_eq!(
            dup,
            InstanceError::Parse {
                line: 2,
                cause: ParseCause::DuplicateItem(1)
            }
        );
        let range = SppInstance::parse("# c\n1 2\n5 1 7\n").unwrap_err();
        assert_eq!(
            range,
            InstanceError::Parse {
                line: 3,
                cause: ParseCause::ItemOutOfRange { item: 7, m_items: 2 }
            }
        );
        let count = SppInstance::parse("1 3\n5 3 0 1\n").unwrap_err();
        assert!(matches!(
            count,
            InstanceError::Parse {
                line: 2,
                cause: ParseCause::CountMismatch { declared: 3, found: 2 }
            }
        ));
        let missing = SppInstance::parse("2 3\n5 1 0\n").unwrap_err();
        assert!(matches!(
            missing,
            InstanceError::Parse {
                cause: ParseCause::MissingColumns { expected: 2, found: 1 },
                ..
            }
        ));
        assert!(SppInstance::parse("# only comments\n").is_err());
    }

    #[test]
    fn canonicalizes_hand_written_file() {
        let hand = "# scratch file\n# name: hand\n3   2\n\n4 2 1 0\n1 1 0   \n 3 1 1\n";
        let canonical = "# name: hand\n3 2\n4 2 0 1\n1 1 0\n3 1 1\n";
        let inst = SppInstance::parse(hand).unwrap();
        assert_eq!(inst.serialize().unwrap(), canonical);
        assert_eq!(SppInstance::parse(canonical).unwrap(), inst);
    }

    #[test]
    fn empty_column_rejected_before_serialization() {
        let mut inst = tiny();
        inst.columns[1].clear();
        assert_eq!(inst.serialize(), Err(InstanceError::EmptyColumn { var: 1 }));
        assert!(inst.validate().issues.contains(&Violation::EmptyColumn { var: 1 }));
    }

    #[test]
    fn validation_reports_uncovered_and_transpose() {
        assert!(tiny().validate().is_clean());
        let gap = SppInstance::new("gap", 6, vec![1, 1], vec![vec![0, 1, 2], vec![3, 4]]).unwrap();
        assert_eq!(gap.validate().uncovered_items(), vec![5]);
        let mut broken = tiny();
        broken.rows[1].pop();
        assert!(broken
            .validate()
            .issues
            .contains(&Violation::TransposeMismatch { item: 1 }));
    }

    #[test]
    fn partition_check() {
        let inst = tiny();
        assert!(inst.is_partition(&[0]));
        assert!(inst.is_partition(&[1, 2]));
        assert!(!inst.is_partition(&[0, 1]));
        assert!(!inst.is_partition(&[1]));
        assert_eq!(inst.cost_of(&[1, 2]), 4);
    }

    proptest! {
        #[test]
        fn generated_instances_round_trip(
            m in 1usize..12, n in 1usize..20, p in 0.05f64..1.0, seed in any::<u64>(), cover in any::<bool>()
        ) {
            let mut params = GeneratorParams::new(m, n, p, seed);
            params.ensure_coverage = cover;
            let inst = generate(&params).unwrap();
            let report = inst.validate();
            if cover {
                prop_assert!(report.is_clean());
            } else {
                let only_uncovered = report.issues.iter().all(|v| matches!(v, Violation::UncoveredItem { .. }));
                prop_assert!(only_uncovered);
            }
            for (item, row) in inst.rows.iter().enumerate() {
                for &var in row {
                    prop_assert!(inst.columns[var as usize].contains(&(item as ItemId)));
                }
            }
            let text = inst.serialize().unwrap();
            prop_assert_eq!(SppInstance::parse(&text).unwrap(), inst);
        }
    }
}
