//! Deterministic synthetic AST corpora.
//!
//! Trees are grown shape-first: a chain fixes the depth, further nodes hang
//! off random shallower nodes until the target size is reached. Types are
//! then assigned top-down from a seeded grammar in which the type of child
//! `j` depends only on its parent's type and `j`, so the number of distinct
//! subtree signatures stays small. Families differ only in their
//! `(depth, node_count)` ranges.
//!
//! When twin type pairs are given, every odd-numbered script is the preceding
//! script with the twins' labels swapped, so both twins occur in exactly the
//! same contexts with equal frequency.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Ast, AstError};
use crate::seed;

/// PowerShell AST type names used for synthetic types, root first.
pub const POWERSHELL_TYPES: [&str; 44] = [
    "ScriptBlockAst",
    "NamedBlockAst",
    "PipelineAst",
    "CommandAst",
    "CommandExpressionAst",
    "CommandParameterAst",
    "StringConstantExpressionAst",
    "ExpandableStringExpressionAst",
    "VariableExpressionAst",
    "ConstantExpressionAst",
    "AssignmentStatementAst",
    "BinaryExpressionAst",
    "UnaryExpressionAst",
    "MemberExpressionAst",
    "InvokeMemberExpressionAst",
    "TypeExpressionAst",
    "TypeConstraintAst",
    "ConvertExpressionAst",
    "ParenExpressionAst",
    "SubExpressionAst",
    "ArrayExpressionAst",
    "ArrayLiteralAst",
    "HashtableAst",
    "IndexExpressionAst",
    "ScriptBlockExpressionAst",
    "ParamBlockAst",
    "ParameterAst",
    "AttributeAst",
    "StatementBlockAst",
    "IfStatementAst",
    "ForStatementAst",
    "ForEachStatementAst",
    "WhileStatementAst",
    "DoWhileStatementAst",
    "TryStatementAst",
    "CatchClauseAst",
    "FunctionDefinitionAst",
    "ReturnStatementAst",
    "ThrowStatementAst",
    "SwitchStatementAst",
    "NamedAttributeArgumentAst",
    "MergingRedirectionAst",
    "FileRedirectionAst",
    "ExitStatementAst",
];

const FAMILY_NAMES: [&str; 8] = [
    "ShellCodeInject",
    "PowerfunReverse",
    "DownloadExecute",
    "CredentialStealer",
    "ReflectiveLoader",
    "DnsTxtStager",
    "AmsiBypass",
    "PersistenceTask",
];

/// Most children any synthetic node may have.
pub const MAX_ARITY: usize = 5;
const GRAMMAR_WIDTH: usize = MAX_ARITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ast(#[from] AstError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyShape {
    pub name: String,
    pub depth_min: usize,
    pub depth_max: usize,
    pub nodes_min: usize,
    pub nodes_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub families: Vec<FamilyShape>,
    pub scripts_per_family: usize,
    pub type_count: usize,
    /// Pairs of type names that must occur in interchangeable contexts.
    #[serde(default)]
    pub twins: Vec<(String, String)>,
}

impl SynthSpec {
    /// `families` families laid out on a grid of disjoint
    /// `(depth, node_count)` boxes when `separable`, otherwise on heavily
    /// overlapping ranges.
    pub fn grid(families: usize, scripts_per_family: usize, type_count: usize, separable: bool, seed: u64) -> Self {
        let families = (0..families)
            .map(|f| {
                let name = FAMILY_NAMES
                    .get(f)
                    .map_or_else(|| format!("Family{f}"), |s| s.to_string());
                if separable {
                    let (d, s) = (f % 4, f / 4);
                    FamilyShape {
                        name,
                        depth_min: 3 + 3 * d,
                        depth_max: 4 + 3 * d,
                        nodes_min: 14 + 10 * s,
                        nodes_max: 21 + 10 * s,
                    }
                } else {
                    FamilyShape {
                        name,
                        depth_min: 4 + f % 2,
                        depth_max: 9 + f % 2,
                        nodes_min: 20 + f % 3,
                        nodes_max: 60 + f % 3,
                    }
                }
            })
            .collect();
        Self {
            seed,
            families,
            scripts_per_family,
            type_count,
            twins: Vec::new(),
        }
    }

    pub fn with_twins(mut self, a: &str, b: &str) -> Self {
        self.twins.push((a.to_owned(), b.to_owned()));
        self
    }

    pub fn type_names(&self) -> Vec<String> {
        (0..self.type_count)
            .map(|i| {
                POWERSHELL_TYPES
                    .get(i)
                    .map_or_else(|| format!("SyntheticType{i}Ast"), |s| s.to_string())
            })
            .collect()
    }

    fn twin_ids(&self) -> Result<Vec<(u32, u32)>, SynthError> {
        let names = self.type_names();
        let id = |n: &str| {
            names
                .iter()
                .position(|m| m == n)
                .map(|i| i as u32)
                .ok_or_else(|| SynthError::Invalid(format!("twin type `{n}` is not among the {} types", names.len())))
        };
        let mut used = std::collections::BTreeSet::new();
        self.twins
            .iter()
            .map(|(a, b)| {
                let (a, b) = (id(a)?, id(b)?);
                if a == b || a == 0 || b == 0 {
                    return Err(SynthError::Invalid("twins must be two distinct non-root types".into()));
                }
                if !used.insert(a) || !used.insert(b) {
                    return Err(SynthError::Invalid("a type may belong to one twin pair only".into()));
                }
                Ok((a, b))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.families.is_empty() {
            return bad("no families".into());
        }
        if self.scripts_per_family == 0 {
            return bad("scripts_per_family must be positive".into());
        }
        if self.type_count < 2 {
            return bad("type_count must be at least 2".into());
        }
        for f in &self.families {
            if f.depth_min == 0 || f.depth_min > f.depth_max {
                return bad(format!("family {}: bad depth range", f.name));
            }
            if f.nodes_min > f.nodes_max || f.nodes_min < f.depth_max {
                return bad(format!("family {}: node range must start at or above depth_max", f.name));
            }
            if f.nodes_max > shape_capacity(f.depth_min) {
                return bad(format!("family {}: {} nodes do not fit in depth {}", f.name, f.nodes_max, f.depth_min));
            }
        }
        let mut names: Vec<&str> = self.families.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.families.len() {
            return bad("duplicate family names".into());
        }
        if !self.twins.is_empty() && !self.scripts_per_family.is_multiple_of(2) {
            return bad("scripts_per_family must be even when twins are requested".into());
        }
        self.twin_ids()?;
        Ok(())
    }

    /// True when no two families' `(depth, node_count)` boxes intersect.
    pub fn boxes_disjoint(&self) -> bool {
        let overlap = |a: &FamilyShape, b: &FamilyShape| {
            a.depth_min <= b.depth_max
                && b.depth_min <= a.depth_max
                && a.nodes_min <= b.nodes_max
                && b.nodes_min <= a.nodes_max
        };
        self.families
            .iter()
            .enumerate()
            .all(|(i, a)| self.families[i + 1..].iter().all(|b| !overlap(a, b)))
    }
}

/// Largest tree of the given depth with at most [`MAX_ARITY`] children per node.
fn shape_capacity(depth: usize) -> usize {
    (0..depth as u32).fold(0usize, |acc, l| acc.saturating_add(MAX_ARITY.saturating_pow(l)))
}

/// Parent index per node (root first, `None`) for a random tree with exactly
/// `depth` levels and `nodes` nodes, relabelled into DFS preorder.
fn random_shape<R: Rng>(depth: usize, nodes: usize, rng: &mut R) -> Vec<Option<usize>> {
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut level = vec![1usize];
    for i in 1..depth {
        parent.push(Some(i - 1));
        level.push(i + 1);
    }
    let mut arity: Vec<usize> = (0..depth).map(|i| usize::from(i + 1 < depth)).collect();
    while parent.len() < nodes {
        let open: Vec<usize> = (0..parent.len())
            .filter(|&i| level[i] < depth && arity[i] < MAX_ARITY)
            .collect();
        let p = open[rng.gen_range(0..open.len())];
        parent.push(Some(p));
        level.push(level[p] + 1);
        arity[p] += 1;
        arity.push(0);
    }
    let mut children = vec![Vec::new(); parent.len()];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    // Shuffle sibling order so the deep chain is not always the first child.
    for kids in &mut children {
        for i in (1..kids.len()).rev() {
            kids.swap(i, rng.gen_range(0..=i));
        }
    }
    let mut order = Vec::with_capacity(parent.len());
    let mut new_index = vec![0; parent.len()];
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        new_index[n] = order.len();
        order.push(n);
        stack.extend(children[n].iter().rev());
    }
    order
        .iter()
        .map(|&old| parent[old].map(|p| new_index[p]))
        .collect()
}

/// Generates the corpus described by `spec`, families in order, scripts
/// numbered within each family.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Ast>, SynthError> {
    spec.validate()?;
    let names = spec.type_names();
    let t = spec.type_count as u32;
    let twins = spec.twin_ids()?;
    let mut grammar_rng = seed::rng(seed::derive(spec.seed, "synth/grammar"));
    let grammar: Vec<Vec<u32>> = (0..t)
        .map(|_| (0..GRAMMAR_WIDTH).map(|_| grammar_rng.gen_range(1..t)).collect())
        .collect();
    let swap = |id: u32| {
        twins
            .iter()
            .find_map(|&(a, b)| match id {
                x if x == a => Some(b),
                x if x == b => Some(a),
                _ => None,
            })
            .unwrap_or(id)
    };

    let mut out = Vec::with_capacity(spec.families.len() * spec.scripts_per_family);
    for (f, family) in spec.families.iter().enumerate() {
        let mut rng = seed::rng(seed::derive_indexed(spec.seed, seed::SYNTH, f as u64));
        let mut previous: Option<Vec<(Option<usize>, u32)>> = None;
        for s in 0..spec.scripts_per_family {
            let nodes = match previous.take() {
                Some(prev) if !twins.is_empty() => prev.into_iter().map(|(p, ty)| (p, swap(ty))).collect(),
                _ => {
                    let depth = rng.gen_range(family.depth_min..=family.depth_max);
                    let count = rng.gen_range(family.nodes_min.max(depth)..=family.nodes_max);
                    let shape = random_shape(depth, count, &mut rng);
                    let mut types = vec![0u32; shape.len()];
                    let mut seen = vec![0usize; shape.len()];
                    for i in 1..shape.len() {
                        let p = shape[i].expect("non-root");
                        let position = seen[p].min(GRAMMAR_WIDTH - 1);
                        seen[p] += 1;
                        types[i] = grammar[types[p] as usize][position];
                    }
                    let nodes: Vec<(Option<usize>, u32)> = shape.into_iter().zip(types).collect();
                    if !twins.is_empty() {
                        previous = Some(nodes.clone());
                    }
                    nodes
                }
            };
            let entries: Vec<(Option<usize>, &str)> =
                nodes.iter().map(|&(p, ty)| (p, names[ty as usize].as_str())).collect();
            out.push(Ast::from_parents(
                format!("{}-{:04}", family.name, s),
                Some(family.name.clone()),
                &entries,
            )?);
        }
    }
    Ok(out)
}
