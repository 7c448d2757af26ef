//! Pedigree records with recurrent cancer onsets and partially observed genotypes.
//!
//! The on-disk format is a flat CSV with one row per individual:
//!
//! ```text
//! family_id,individual_id,father_id,mother_id,sex,genotype,proband,onset_ages,censor_age
//! F1,P1,0,0,1,1,1,20;35,50
//! ```
//!
//! `father_id`/`mother_id` are `0` for founders, `sex` is `1` for male and `0`
//! for female, `genotype` is `0`, `1` or `NA`, and `onset_ages` is a
//! semicolon-delimited ascending list of ages (possibly empty). Standard PED
//! files have no place for repeated event ages, hence the custom layout.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker used in the parent columns for founders.
pub const FOUNDER: &str = "0";

/// Default time normalization constant in years.
pub const DEFAULT_T_MAX: f64 = 100.0;

pub const HEADER: [&str; 9] = [
    "family_id",
    "individual_id",
    "father_id",
    "mother_id",
    "sex",
    "genotype",
    "proband",
    "onset_ages",
    "censor_age",
];

#[derive(Debug, Error)]
pub enum PedigreeError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: missing required column `{column}`")]
    MissingColumn { line: u64, column: String },
    #[error("line {line}: `{field}` value `{value}` is outside its domain")]
    InvalidCode {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate individual `{id}` in family `{family}`")]
    DuplicateIndividual { line: u64, family: String, id: String },
    #[error("family `{family}`: individual `{id}` references unknown parent `{parent}`")]
    UnknownParent {
        family: String,
        id: String,
        parent: String,
    },
    #[error("duplicate family id `{0}`")]
    DuplicateFamily(String),
    #[error("line {line}: {source}")]
    Individual {
        line: u64,
        #[source]
        source: IndividualError,
    },
    #[error("age {age} exceeds t_max {t_max}")]
    AgeAboveTmax { age: f64, t_max: f64 },
    #[error("t_max must be positive and finite, got {0}")]
    InvalidTmax(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Violations of the per-individual invariants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndividualError {
    #[error("individual `{0}`: onset ages must be non-negative, finite and strictly increasing")]
    OnsetOrder(String),
    #[error("individual `{id}`: censor age {censor} precedes last onset {last_onset}")]
    CensorBeforeOnset {
        id: String,
        censor: f64,
        last_onset: f64,
    },
    #[error("individual `{0}`: exactly one parent given; use `0` for both or neither")]
    HalfFounder(String),
    #[error("individual `{0}`: a proband must have at least one onset")]
    UnaffectedProband(String),
    #[error("individual `{0}`: censor age must be non-negative and finite")]
    InvalidCensor(String),
    #[error("individual `{0}`: is listed as its own parent")]
    SelfParent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn code(self) -> u8 {
        match self {
            Sex::Female => 0,
            Sex::Male => 1,
        }
    }

    pub fn indicator(self) -> f64 {
        f64::from(self.code())
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "0" => Some(Sex::Female),
            "1" => Some(Sex::Male),
            _ => None,
        }
    }
}

/// Observed carrier status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenotypeObs {
    Wildtype,
    Carrier,
    Missing,
}

impl GenotypeObs {
    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "0" => Some(GenotypeObs::Wildtype),
            "1" => Some(GenotypeObs::Carrier),
            "NA" => Some(GenotypeObs::Missing),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            GenotypeObs::Wildtype => "0",
            GenotypeObs::Carrier => "1",
            GenotypeObs::Missing => "NA",
        }
    }

    pub fn carrier(self) -> Option<bool> {
        match self {
            GenotypeObs::Wildtype => Some(false),
            GenotypeObs::Carrier => Some(true),
            GenotypeObs::Missing => None,
        }
    }

    pub fn is_observed(self) -> bool {
        self != GenotypeObs::Missing
    }
}

/// One pedigree member. Ages are in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub father: Option<String>,
    pub mother: Option<String>,
    pub sex: Sex,
    pub genotype: GenotypeObs,
    pub onset_ages: Vec<f64>,
    pub censor_age: f64,
    pub is_proband: bool,
}

impl Individual {
    /// Builds an individual, enforcing the record-level invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        father: Option<String>,
        mother: Option<String>,
        sex: Sex,
        genotype: GenotypeObs,
        onset_ages: Vec<f64>,
        censor_age: f64,
        is_proband: bool,
    ) -> Result<Self, IndividualError> {
        let ind = Individual {
            id: id.into(),
            father,
            mother,
            sex,
            genotype,
            onset_ages,
            censor_age,
            is_proband,
        };
        ind.check()?;
        Ok(ind)
    }

    pub fn founder(
        id: impl Into<String>,
        sex: Sex,
        genotype: GenotypeObs,
        onset_ages: Vec<f64>,
        censor_age: f64,
    ) -> Result<Self, IndividualError> {
        Self::new(id, None, None, sex, genotype, onset_ages, censor_age, false)
    }

    pub fn check(&self) -> Result<(), IndividualError> {
        let id = &self.id;
        if self.father.is_some() != self.mother.is_some() {
            return Err(IndividualError::HalfFounder(id.clone()));
        }
        if self.father.as_deref() == Some(id) || self.mother.as_deref() == Some(id) {
            return Err(IndividualError::SelfParent(id.clone()));
        }
        if !(self.censor_age.is_finite() && self.censor_age >= 0.0) {
            return Err(IndividualError::InvalidCensor(id.clone()));
        }
        let mut prev = None;
        for &age in &self.onset_ages {
            if !age.is_finite() || age < 0.0 || prev.is_some_and(|p| age <= p) {
                return Err(IndividualError::OnsetOrder(id.clone()));
            }
            prev = Some(age);
        }
        if let Some(&last) = self.onset_ages.last() {
            if self.censor_age < last {
                return Err(IndividualError::CensorBeforeOnset {
                    id: id.clone(),
                    censor: self.censor_age,
                    last_onset: last,
                });
            }
        }
        if self.is_proband && self.onset_ages.is_empty() {
            return Err(IndividualError::UnaffectedProband(id.clone()));
        }
        Ok(())
    }

    pub fn is_founder(&self) -> bool {
        self.father.is_none()
    }

    pub fn first_onset(&self) -> Option<f64> {
        self.onset_ages.first().copied()
    }

    pub fn max_age(&self) -> f64 {
        self.onset_ages
            .iter()
            .copied()
            .fold(self.censor_age, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub id: String,
    pub members: Vec<Individual>,
}

impl Family {
    pub fn new(id: impl Into<String>, members: Vec<Individual>) -> Self {
        Family {
            id: id.into(),
            members,
        }
    }

    pub fn proband_index(&self) -> Option<usize> {
        self.members.iter().position(|m| m.is_proband)
    }

    pub fn proband(&self) -> Option<&Individual> {
        self.members.iter().find(|m| m.is_proband)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.members.iter().position(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Checks identifiers and parent references; structural problems such as
    /// loops are reported by [`validate_family`] instead.
    pub fn check_references(&self) -> Result<(), PedigreeError> {
        let mut seen = HashSet::new();
        for m in &self.members {
            if !seen.insert(m.id.as_str()) {
                return Err(PedigreeError::DuplicateIndividual {
                    line: 0,
                    family: self.id.clone(),
                    id: m.id.clone(),
                });
            }
        }
        for m in &self.members {
            for parent in [&m.father, &m.mother].into_iter().flatten() {
                if !seen.contains(parent.as_str()) {
                    return Err(PedigreeError::UnknownParent {
                        family: self.id.clone(),
                        id: m.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySet {
    pub families: Vec<Family>,
    pub t_max: f64,
}

impl FamilySet {
    /// Builds a family set, checking ids, parent references and the age ceiling.
    pub fn new(families: Vec<Family>, t_max: f64) -> Result<Self, PedigreeError> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(PedigreeError::InvalidTmax(t_max));
        }
        let mut ids = HashSet::new();
        for f in &families {
            if !ids.insert(f.id.as_str()) {
                return Err(PedigreeError::DuplicateFamily(f.id.clone()));
            }
            f.check_references()?;
            for m in &f.members {
                let age = m.max_age();
                if age > t_max {
                    return Err(PedigreeError::AgeAboveTmax { age, t_max });
                }
            }
        }
        Ok(FamilySet { families, t_max })
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn n_individuals(&self) -> usize {
        self.families.iter().map(Family::len).sum()
    }

    /// Subset by family index, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> FamilySet {
        FamilySet {
            families: indices.iter().map(|&i| self.families[i].clone()).collect(),
            t_max: self.t_max,
        }
    }

    pub fn validate(&self) -> Vec<(String, ValidationReport)> {
        self.families
            .iter()
            .map(|f| (f.id.clone(), validate_family(f)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PedigreeFormat {
    pub t_max: f64,
    pub delimiter: u8,
}

impl Default for PedigreeFormat {
    fn default() -> Self {
        PedigreeFormat {
            t_max: DEFAULT_T_MAX,
            delimiter: b',',
        }
    }
}

fn parse_age(raw: &str, line: u64, field: &'static str) -> Result<f64, PedigreeError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|a| a.is_finite())
        .ok_or_else(|| PedigreeError::InvalidCode {
            line,
            field,
            value: raw.to_string(),
        })
}

fn parent_field(raw: &str) -> Option<String> {
    let raw = raw.trim();
    (raw != FOUNDER && !raw.is_empty()).then(|| raw.to_string())
}

/// Reads the pedigree CSV into a [`FamilySet`]. Rows of one family need not be
/// contiguous; families keep the order of their first appearance.
pub fn parse_pedigree<R: Read>(
    source: R,
    format: &PedigreeFormat,
) -> Result<FamilySet, PedigreeError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut column = [0usize; 9];
    for (slot, name) in column.iter_mut().zip(HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PedigreeError::MissingColumn {
                line: 1,
                column: name.to_string(),
            })?;
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_family: HashMap<String, (Vec<Individual>, HashSet<String>)> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            PedigreeError::Malformed {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |k: usize| record.get(column[k]).unwrap_or("");

        let family_id = get(0).to_string();
        let id = get(1).to_string();
        if family_id.is_empty() || id.is_empty() {
            return Err(PedigreeError::Malformed {
                line,
                message: "empty family or individual id".into(),
            });
        }
        let sex = Sex::from_code(get(4)).ok_or_else(|| PedigreeError::InvalidCode {
            line,
            field: "sex",
            value: get(4).to_string(),
        })?;
        let genotype = GenotypeObs::from_code(get(5)).ok_or_else(|| PedigreeError::InvalidCode {
            line,
            field: "genotype",
            value: get(5).to_string(),
        })?;
        let is_proband = match get(6) {
            "0" => false,
            "1" => true,
            other => {
                return Err(PedigreeError::InvalidCode {
                    line,
                    field: "proband",
                    value: other.to_string(),
                })
            }
        };
        let onset_ages = get(7)
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_age(s, line, "onset_ages"))
            .collect::<Result<Vec<_>, _>>()?;
        let censor_age = parse_age(get(8), line, "censor_age")?;

        let ind = Individual::new(
            id.clone(),
            parent_field(get(2)),
            parent_field(get(3)),
            sex,
            genotype,
            onset_ages,
            censor_age,
            is_proband,
        )
        .map_err(|source| PedigreeError::Individual { line, source })?;

        let entry = by_family.entry(family_id.clone()).or_insert_with(|| {
            order.push(family_id.clone());
            (Vec::new(), HashSet::new())
        });
        if !entry.1.insert(id.clone()) {
            return Err(PedigreeError::DuplicateIndividual {
                line,
                family: family_id,
                id,
            });
        }
        entry.0.push(ind);
    }

    let families = order
        .into_iter()
        .map(|fid| {
            let (members, _) = by_family.remove(&fid).unwrap_or_default();
            Family::new(fid, members)
        })
        .collect();
    FamilySet::new(families, format.t_max)
}

/// Writes a [`FamilySet`] in the format read by [`parse_pedigree`].
pub fn write_pedigree<W: Write>(fs: &FamilySet, sink: W) -> Result<(), PedigreeError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(HEADER)?;
    for family in &fs.families {
        for m in &family.members {
            let onsets = m
                .onset_ages
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(";");
            writer.write_record([
                family.id.as_str(),
                m.id.as_str(),
                m.father.as_deref().unwrap_or(FOUNDER),
                m.mother.as_deref().unwrap_or(FOUNDER),
                if m.sex == Sex::Male { "1" } else { "0" },
                m.genotype.code(),
                if m.is_proband { "1" } else { "0" },
                onsets.as_str(),
                m.censor_age.to_string().as_str(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn pedigree_to_string(fs: &FamilySet) -> String {
    let mut buf = Vec::new();
    write_pedigree(fs, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("pedigree output is UTF-8")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingProband,
    MultipleProbands(Vec<String>),
    /// The individual is its own ancestor.
    Cycle(String),
    /// A marriage or inbreeding loop passing through the listed individual.
    Loop(String),
    UnknownParent { id: String, parent: String },
    DuplicateId(String),
}

impl Violation {
    /// Whether the violation prevents genotype peeling (as opposed to
    /// ascertainment bookkeeping).
    pub fn blocks_peeling(&self) -> bool {
        !matches!(self, Violation::MissingProband | Violation::MultipleProbands(_))
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingProband => write!(f, "no proband"),
            Violation::MultipleProbands(ids) => write!(f, "multiple probands: {}", ids.join(", ")),
            Violation::Cycle(id) => write!(f, "`{id}` is its own ancestor"),
            Violation::Loop(id) => write!(f, "marriage/inbreeding loop through `{id}`"),
            Violation::UnknownParent { id, parent } => {
                write!(f, "`{id}` references unknown parent `{parent}`")
            }
            Violation::DuplicateId(id) => write!(f, "duplicate individual `{id}`"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_peelable(&self) -> bool {
        !self.violations.iter().any(Violation::blocks_peeling)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Lists everything that makes a family unusable for peeling or ascertainment
/// correction. An empty report means the family is fully usable.
pub fn validate_family(f: &Family) -> ValidationReport {
    let mut violations = Vec::new();

    let probands: Vec<String> = f
        .members
        .iter()
        .filter(|m| m.is_proband)
        .map(|m| m.id.clone())
        .collect();
    match probands.len() {
        0 => violations.push(Violation::MissingProband),
        1 => {}
        _ => violations.push(Violation::MultipleProbands(probands)),
    }

    let mut index = HashMap::new();
    for (i, m) in f.members.iter().enumerate() {
        if index.insert(m.id.as_str(), i).is_some() {
            violations.push(Violation::DuplicateId(m.id.clone()));
        }
    }
    let mut parents = vec![None; f.len()];
    let mut dangling = false;
    for (i, m) in f.members.iter().enumerate() {
        if let (Some(fa), Some(mo)) = (&m.father, &m.mother) {
            match (index.get(fa.as_str()), index.get(mo.as_str())) {
                (Some(&a), Some(&b)) => parents[i] = Some((a, b)),
                _ => {
                    dangling = true;
                    let parent = if index.contains_key(fa.as_str()) { mo } else { fa };
                    violations.push(Violation::UnknownParent {
                        id: m.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }
    }
    if dangling || violations.iter().any(|v| matches!(v, Violation::DuplicateId(_))) {
        return ValidationReport { violations };
    }

    // Ancestry cycles: iterative DFS over parent links with three colours.
    let mut state = vec![0u8; f.len()];
    let mut cyclic = false;
    for start in 0..f.len() {
        if state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let ps = parents[node].map(|(a, b)| [a, b]);
            if let Some(ps) = ps.filter(|_| *next < 2) {
                let p = ps[*next];
                *next += 1;
                match state[p] {
                    0 => {
                        state[p] = 1;
                        stack.push((p, 0));
                    }
                    1 => {
                        cyclic = true;
                        violations.push(Violation::Cycle(f.members[p].id.clone()));
                    }
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
    }
    if cyclic {
        return ValidationReport { violations };
    }

    // Loop detection on the individual/mating bipartite graph: it must be a forest.
    let mut matings: HashMap<(usize, usize), usize> = HashMap::new();
    for p in parents.iter().flatten() {
        let next = f.len() + matings.len();
        matings.entry(*p).or_insert(next);
    }
    let mut dsu = DisjointSet::new(f.len() + matings.len());
    let mut looped = HashSet::new();
    let mut edge = |dsu: &mut DisjointSet, person: usize, mating: usize| {
        if !dsu.union(person, mating) {
            looped.insert(person);
        }
    };
    let mut mating_list: Vec<(&(usize, usize), &usize)> = matings.iter().collect();
    mating_list.sort_by_key(|(_, &m)| m);
    for (&(fa, mo), &m) in mating_list {
        edge(&mut dsu, fa, m);
        edge(&mut dsu, mo, m);
    }
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            edge(&mut dsu, i, matings[p]);
        }
    }
    let mut looped: Vec<usize> = looped.into_iter().collect();
    looped.sort_unstable();
    violations.extend(
        looped
            .into_iter()
            .map(|i| Violation::Loop(f.members[i].id.clone())),
    );

    ValidationReport { violations }
}

#[derive(Debug, Error, PartialEq)]
#[error("age {age} outside [0, {t_max}]")]
pub struct AgeRangeError {
    pub age: f64,
    pub t_max: f64,
}

/// Maps an age in years onto the unit interval.
pub fn normalize_age(age: f64, t_max: f64) -> Result<f64, AgeRangeError> {
    if !(0.0..=t_max).contains(&age) {
        return Err(AgeRangeError { age, t_max });
    }
    Ok(age / t_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str =
        "family_id,individual_id,father_id,mother_id,sex,genotype,proband,onset_ages,censor_age\n";

    fn parse(body: &str) -> Result<FamilySet, PedigreeError> {
        parse_pedigree(format!("{HEAD}{body}").as_bytes(), &PedigreeFormat::default())
    }

    fn person(id: &str, parents: Option<(&str, &str)>, proband: bool) -> Individual {
        Individual::new(
            id,
            parents.map(|p| p.0.to_string()),
            parents.map(|p| p.1.to_string()),
            Sex::Female,
            GenotypeObs::Missing,
            if proband { vec![10.0] } else { vec![] },
            40.0,
            proband,
        )
        .unwrap()
    }

    #[test]
    fn parses_documented_row() {
        let fs = parse("F1,P1,0,0,1,1,1,20;35,50\n").unwrap();
        let p = &fs.families[0].members[0];
        assert_eq!(p.id, "P1");
        assert!(p.is_founder());
        assert_eq!(p.sex, Sex::Male);
        assert_eq!(p.genotype, GenotypeObs::Carrier);
        assert_eq!(p.onset_ages, vec![20.0, 35.0]);
        assert_eq!(p.censor_age, 50.0);
        assert!(p.is_proband);
    }

    #[test]
    fn na_genotype_is_missing() {
        let fs = parse("F1,A,0,0,0,NA,0,,30\n").unwrap();
        assert_eq!(fs.families[0].members[0].genotype, GenotypeObs::Missing);
        assert!(fs.families[0].members[0].onset_ages.is_empty());
    }

    #[test]
    fn rejects_censor_before_onset() {
        let err = parse("F1,A,0,0,0,NA,0,20;35,30\n").unwrap_err();
        assert!(matches!(
            err,
            PedigreeError::Individual {
                line: 2,
                source: IndividualError::CensorBeforeOnset { .. }
            }
        ));
    }

    #[test]
    fn censor_equal_to_last_onset_is_allowed() {
        assert!(parse("F1,A,0,0,0,NA,0,20;35,35\n").is_ok());
    }

    #[test]
    fn rejects_bad_codes_with_line_numbers() {
        let err = parse("F1,A,0,0,0,NA,0,,30\nF1,B,0,0,2,NA,0,,30\n").unwrap_err();
        assert!(matches!(err, PedigreeError::InvalidCode { line: 3, field: "sex", .. }));
        let err = parse("F1,A,0,0,0,2,0,,30\n").unwrap_err();
        assert!(matches!(err, PedigreeError::InvalidCode { field: "genotype", .. }));
        let err = parse("F1,A,0,0,0,0,0,x,30\n").unwrap_err();
        assert!(matches!(err, PedigreeError::InvalidCode { field: "onset_ages", .. }));
    }

    #[test]
    fn rejects_malformed_rows_and_references() {
        assert!(matches!(
            parse("F1,A,0,0,0\n").unwrap_err(),
            PedigreeError::Malformed { line: 2, .. }
        ));
        assert!(matches!(
            parse("F1,A,0,0,0,NA,0,,30\nF1,A,0,0,0,NA,0,,30\n").unwrap_err(),
            PedigreeError::DuplicateIndividual { line: 3, .. }
        ));
        assert!(matches!(
            parse("F1,A,X,Y,0,NA,0,,30\n").unwrap_err(),
            PedigreeError::UnknownParent { .. }
        ));
        assert!(matches!(
            parse("F1,A,0,0,0,NA,0,,130\n").unwrap_err(),
            PedigreeError::AgeAboveTmax { .. }
        ));
        assert!(matches!(
            parse("F1,A,B,0,0,NA,0,,30\nF1,B,0,0,1,NA,0,,30\n").unwrap_err(),
            PedigreeError::Individual {
                source: IndividualError::HalfFounder(_),
                ..
            }
        ));
    }

    #[test]
    fn nuclear_family_validates_clean() {
        let f = Family::new(
            "F",
            vec![
                person("dad", None, false),
                person("mom", None, false),
                person("kid", Some(("dad", "mom")), true),
            ],
        );
        assert!(validate_family(&f).is_empty());
    }

    #[test]
    fn sibling_mating_is_a_loop() {
        let f = Family::new(
            "F",
            vec![
                person("dad", None, false),
                person("mom", None, false),
                person("s1", Some(("dad", "mom")), true),
                person("s2", Some(("dad", "mom")), false),
                person("kid", Some(("s1", "s2")), false),
            ],
        );
        let report = validate_family(&f);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Loop(_))));
        assert!(!report.is_peelable());
    }

    #[test]
    fn half_siblings_through_two_marriages_are_fine() {
        let f = Family::new(
            "F",
            vec![
                person("dad", None, false),
                person("m1", None, false),
                person("m2", None, false),
                person("a", Some(("dad", "m1")), true),
                person("b", Some(("dad", "m2")), false),
            ],
        );
        assert!(validate_family(&f).is_empty());
    }

    #[test]
    fn proband_count_violations() {
        let f = Family::new("F", vec![person("a", None, false)]);
        assert_eq!(validate_family(&f).violations, vec![Violation::MissingProband]);
        assert!(validate_family(&f).is_peelable());
        let f = Family::new("F", vec![person("a", None, true), person("b", None, true)]);
        assert!(matches!(
            validate_family(&f).violations[..],
            [Violation::MultipleProbands(_)]
        ));
    }

    #[test]
    fn ancestry_cycle_is_reported() {
        let mut a = person("a", Some(("b", "c")), true);
        a.father = Some("b".into());
        let f = Family::new(
            "F",
            vec![a, person("b", Some(("a", "c")), false), person("c", None, false)],
        );
        let report = validate_family(&f);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Cycle(_))));
    }

    #[test]
    fn normalize_age_examples() {
        assert_eq!(normalize_age(50.0, 100.0), Ok(0.5));
        assert_eq!(normalize_age(0.0, 100.0), Ok(0.0));
        assert_eq!(normalize_age(100.0, 100.0), Ok(1.0));
        assert!(normalize_age(100.5, 100.0).is_err());
        assert!(normalize_age(-1.0, 100.0).is_err());
    }
}
