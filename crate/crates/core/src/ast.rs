//! AST data model and the `.ast.tsv` interchange format.
//!
//! A file lists one node per line in depth-first order:
//!
//! ```text
//! # version 1
//! # script_id sample-0001
//! # family ShellCodeInject
//! 0 -1 ScriptBlockAst
//! 1 0 NamedBlockAst
//! ```
//!
//! Columns (shown space-separated above) are `index<TAB>parent<TAB>TypeName`; the root has parent `-1`.
//! Type names and header values escape `\`, tab, newline and carriage return
//! as `\\`, `\t`, `\n`, `\r`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_EXTENSION: &str = ".ast.tsv";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AstError {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },
    #[error("empty file: no nodes")]
    Empty,
    #[error("invalid tree: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("non-DFS parent {parent} for node {index}")]
    NonDfsParent { index: usize, parent: usize },
    #[error("multiple roots (node {0} has parent -1)")]
    MultipleRoots(usize),
    #[error("first node must be the root")]
    MissingRoot,
    #[error("node index {found} out of sequence, expected {expected}")]
    OutOfSequence { expected: usize, found: usize },
    #[error("unknown escape sequence \\{0}")]
    UnknownEscape(char),
    #[error("unknown header `{0}`")]
    UnknownHeader(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(String),
    #[error("empty type name")]
    EmptyTypeName,
}

/// Strips a namespace prefix, e.g.
/// `System.Management.Automation.Language.CommandAst` becomes `CommandAst`.
pub fn normalize_type_name(name: &str) -> &str {
    match name.rsplit_once('.') {
        Some((_, tail)) if !tail.is_empty() => tail,
        _ => name,
    }
}

/// Dense, ordered table of node-type names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct NodeTypeTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl NodeTypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self, AstError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table = Self::new();
        for name in names {
            let name = normalize_type_name(name.as_ref());
            if name.is_empty() {
                return Err(AstError::Invalid("empty type name".into()));
            }
            if table.id(name).is_some() {
                return Err(AstError::Invalid(format!("duplicate type name `{name}`")));
            }
            table.intern(name);
        }
        Ok(table)
    }

    /// Returns the id of `name`, adding it if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        let name = normalize_type_name(name);
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(normalize_type_name(name)).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl TryFrom<Vec<String>> for NodeTypeTable {
    type Error = AstError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_names(names)
    }
}

impl From<NodeTypeTable> for Vec<String> {
    fn from(table: NodeTypeTable) -> Self {
        table.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AstNode {
    pub index: usize,
    pub parent: Option<usize>,
    pub type_id: u32,
}

/// A parsed tree. Type ids index into the tree's own [`NodeTypeTable`]; use
/// [`extract_subtrees_into`] to map them onto a corpus-wide table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    pub script_id: String,
    pub family: Option<String>,
    types: NodeTypeTable,
    nodes: Vec<AstNode>,
}

impl Ast {
    /// Builds a tree from `(parent, type name)` pairs listed in DFS order.
    pub fn from_parents<S: AsRef<str>>(
        script_id: impl Into<String>,
        family: Option<String>,
        entries: &[(Option<usize>, S)],
    ) -> Result<Self, AstError> {
        let mut types = NodeTypeTable::new();
        let nodes = entries
            .iter()
            .enumerate()
            .map(|(index, (parent, name))| AstNode {
                index,
                parent: *parent,
                type_id: types.intern(name.as_ref()),
            })
            .collect();
        Self::new(script_id, family, types, nodes)
    }

    pub fn new(
        script_id: impl Into<String>,
        family: Option<String>,
        types: NodeTypeTable,
        nodes: Vec<AstNode>,
    ) -> Result<Self, AstError> {
        if nodes.is_empty() {
            return Err(AstError::Empty);
        }
        for (pos, node) in nodes.iter().enumerate() {
            if node.index != pos {
                return Err(AstError::Invalid(format!(
                    "node at position {pos} has index {}",
                    node.index
                )));
            }
            match (pos, node.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err(AstError::Invalid("node 0 must be the root".into())),
                (_, None) => return Err(AstError::Invalid(format!("node {pos} is a second root"))),
                (_, Some(p)) if p >= pos => {
                    return Err(AstError::Invalid(format!(
                        "node {pos} has non-DFS parent {p}"
                    )))
                }
                _ => {}
            }
            if types.name(node.type_id).is_none() {
                return Err(AstError::Invalid(format!(
                    "node {pos} has unknown type id {}",
                    node.type_id
                )));
            }
        }
        Ok(Self {
            script_id: script_id.into(),
            family,
            types,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn types(&self) -> &NodeTypeTable {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn type_name(&self, index: usize) -> &str {
        self.types
            .name(self.nodes[index].type_id)
            .expect("validated type id")
    }

    /// Child indices of every node, each list in ascending DFS order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for node in &self.nodes[1..] {
            children[node.parent.expect("non-root")].push(node.index);
        }
        children
    }

    /// Node-exact equality on structure and type names, ignoring how the
    /// type tables happen to be numbered.
    pub fn same_tree(&self, other: &Ast) -> bool {
        self.script_id == other.script_id
            && self.family == other.family
            && self.nodes.len() == other.nodes.len()
            && (0..self.nodes.len()).all(|i| {
                self.nodes[i].parent == other.nodes[i].parent
                    && self.type_name(i) == other.type_name(i)
            })
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(text: &str) -> Result<String, ParseErrorKind> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(ParseErrorKind::UnknownEscape(other)),
            None => return Err(ParseErrorKind::Malformed("dangling escape".into())),
        }
    }
    Ok(out)
}

/// Parses an `.ast.tsv` document.
pub fn parse_ast_file(content: &str) -> Result<Ast, AstError> {
    let err = |line: usize, kind: ParseErrorKind| AstError::Parse { line, kind };
    let mut script_id = String::new();
    let mut family = None;
    let mut types = NodeTypeTable::new();
    let mut nodes: Vec<AstNode> = Vec::new();

    let body = content.strip_suffix('\n').unwrap_or(content);
    if body.is_empty() {
        return Err(AstError::Empty);
    }
    for (i, raw) in body.split('\n').enumerate() {
        let line = i + 1;
        if let Some(header) = raw.strip_prefix('#') {
            let header = header.strip_prefix(' ').unwrap_or(header);
            let (key, value) = header.split_once(' ').unwrap_or((header, ""));
            match key {
                "version" => {
                    if value != FORMAT_VERSION.to_string() {
                        return Err(err(line, ParseErrorKind::UnsupportedVersion(value.into())));
                    }
                }
                "script_id" => script_id = unescape(value).map_err(|k| err(line, k))?,
                "family" => family = Some(unescape(value).map_err(|k| err(line, k))?),
                other => return Err(err(line, ParseErrorKind::UnknownHeader(other.into()))),
            }
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(
                line,
                ParseErrorKind::Malformed(format!("expected 3 tab-separated fields, got {}", fields.len())),
            ));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| err(line, ParseErrorKind::Malformed(format!("bad index `{}`", fields[0]))))?;
        let parent: i64 = fields[1]
            .parse()
            .map_err(|_| err(line, ParseErrorKind::Malformed(format!("bad parent `{}`", fields[1]))))?;
        let name = unescape(fields[2]).map_err(|k| err(line, k))?;
        if name.is_empty() {
            return Err(err(line, ParseErrorKind::EmptyTypeName));
        }
        let parent = match parent {
            -1 if nodes.is_empty() => None,
            -1 => return Err(err(line, ParseErrorKind::MultipleRoots(index))),
            p if p < 0 => {
                return Err(err(line, ParseErrorKind::Malformed(format!("bad parent `{p}`"))))
            }
            p => {
                let p = p as usize;
                if p >= index {
                    return Err(err(line, ParseErrorKind::NonDfsParent { index, parent: p }));
                }
                if nodes.is_empty() {
                    return Err(err(line, ParseErrorKind::MissingRoot));
                }
                Some(p)
            }
        };
        if index != nodes.len() {
            return Err(err(
                line,
                ParseErrorKind::OutOfSequence { expected: nodes.len(), found: index },
            ));
        }
        nodes.push(AstNode {
            index,
            parent,
            type_id: types.intern(&name),
        });
    }
    if nodes.is_empty() {
        return Err(AstError::Empty);
    }
    Ast::new(script_id, family, types, nodes)
}

/// Serialises to the interchange format. Headers are written only when the
/// tree carries a script id or family.
pub fn serialize_ast(ast: &Ast) -> String {
    let mut out = String::new();
    if !ast.script_id.is_empty() || ast.family.is_some() {
        out.push_str(&format!("# version {FORMAT_VERSION}\n"));
        if !ast.script_id.is_empty() {
            out.push_str(&format!("# script_id {}\n", escape(&ast.script_id)));
        }
        if let Some(family) = &ast.family {
            out.push_str(&format!("# family {}\n", escape(family)));
        }
    }
    for node in &ast.nodes {
        let parent = node.parent.map_or(-1, |p| p as i64);
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            node.index,
            parent,
            escape(ast.type_name(node.index))
        ));
    }
    out
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_ast(self))
    }
}

/// Depth and size of a tree. Depth counts nodes on the longest root-to-leaf
/// path, so a lone root has depth 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeFeatures {
    pub depth: usize,
    pub node_count: usize,
}

pub fn tree_features(ast: &Ast) -> TreeFeatures {
    let mut level = vec![0usize; ast.len()];
    let mut depth = 0;
    for node in ast.nodes() {
        level[node.index] = node.parent.map_or(1, |p| level[p] + 1);
        depth = depth.max(level[node.index]);
    }
    TreeFeatures {
        depth,
        node_count: ast.len(),
    }
}

/// Number of leaf descendants of every node (a leaf counts itself).
pub fn leaf_counts(ast: &Ast) -> Vec<u64> {
    let mut counts = vec![0u64; ast.len()];
    // Parents precede children, so a reverse sweep sees every child first.
    for node in ast.nodes().iter().rev() {
        if counts[node.index] == 0 {
            counts[node.index] = 1;
        }
        if let Some(p) = node.parent {
            counts[p] += counts[node.index];
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtreeChild {
    pub type_id: u32,
    pub leaf_fraction: f64,
}

/// A non-leaf node and its immediate children, the unit of embedding training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtree {
    pub parent_type: u32,
    pub children: Vec<SubtreeChild>,
}

impl Subtree {
    pub fn new(parent_type: u32, children: Vec<SubtreeChild>) -> Self {
        Self {
            parent_type,
            children,
        }
    }

    /// Builds a subtree whose leaf fractions are given by per-child leaf counts.
    pub fn from_leaf_counts(parent_type: u32, children: &[(u32, u64)]) -> Self {
        let total: u64 = children.iter().map(|&(_, c)| c).sum();
        Self::new(
            parent_type,
            children
                .iter()
                .map(|&(type_id, count)| SubtreeChild {
                    type_id,
                    leaf_fraction: count as f64 / total as f64,
                })
                .collect(),
        )
    }

    pub fn arity(&self) -> usize {
        self.children.len()
    }

    /// Parent type followed by child types; leaf fractions are ignored.
    pub fn signature(&self) -> Vec<u32> {
        std::iter::once(self.parent_type)
            .chain(self.children.iter().map(|c| c.type_id))
            .collect()
    }

    pub fn max_type_id(&self) -> u32 {
        self.signature().into_iter().max().unwrap_or(0)
    }
}

/// One subtree per internal node, in DFS order of the parent. Type ids refer
/// to the tree's own table.
pub fn extract_subtrees(ast: &Ast) -> Vec<Subtree> {
    let ids: Vec<u32> = (0..ast.types().len() as u32).collect();
    extract_with_map(ast, &ids)
}

/// Like [`extract_subtrees`] but re-interns types into a shared table.
pub fn extract_subtrees_into(ast: &Ast, table: &mut NodeTypeTable) -> Vec<Subtree> {
    let ids: Vec<u32> = ast.types().names().iter().map(|n| table.intern(n)).collect();
    extract_with_map(ast, &ids)
}

fn extract_with_map(ast: &Ast, ids: &[u32]) -> Vec<Subtree> {
    let leaves = leaf_counts(ast);
    let type_of = |i: usize| ids[ast.nodes()[i].type_id as usize];
    ast.children()
        .iter()
        .enumerate()
        .filter(|(_, kids)| !kids.is_empty())
        .map(|(p, kids)| {
            let total = leaves[p] as f64;
            Subtree::new(
                type_of(p),
                kids.iter()
                    .map(|&c| SubtreeChild {
                        type_id: type_of(c),
                        leaf_fraction: leaves[c] as f64 / total,
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(entries: &[(Option<usize>, &str)]) -> Ast {
        Ast::from_parents("", None, entries).unwrap()
    }

    #[test]
    fn parses_two_nodes() {
        let ast = parse_ast_file("0\t-1\tScriptBlock\n1\t0\tCommand").unwrap();
        assert_eq!(ast.len(), 2);
        assert_eq!(ast.type_name(0), "ScriptBlock");
        assert_eq!(ast.nodes()[1].parent, Some(0));
    }

    #[test]
    fn parses_singleton() {
        let ast = parse_ast_file("0\t-1\tX").unwrap();
        assert_eq!(ast.len(), 1);
        assert_eq!(serialize_ast(&ast), "0\t-1\tX\n");
    }

    #[test]
    fn rejects_forward_parent() {
        let e = parse_ast_file("0\t-1\tA\n1\t2\tX").unwrap_err();
        assert_eq!(
            e,
            AstError::Parse {
                line: 2,
                kind: ParseErrorKind::NonDfsParent { index: 1, parent: 2 }
            }
        );
        assert!(e.to_string().starts_with("line 2: non-DFS parent"));
    }

    #[test]
    fn rejects_bad_inputs_with_line_numbers() {
        let cases = [
            ("0\t-1\tA\n1\t-1\tB", 2, "multiple roots"),
            ("0\t-1\tA\nbogus", 2, "malformed"),
            ("# version 1\n0\t-1\tA\\q", 2, "unknown escape"),
            ("0\t-1\tA\n2\t0\tB", 2, "out of sequence"),
            ("# version 2\n0\t-1\tA", 1, "unsupported"),
            ("# colour red\n0\t-1\tA", 1, "unknown header"),
            ("0\t-1\t", 1, "empty type"),
        ];
        for (input, line, needle) in cases {
            match parse_ast_file(input) {
                Err(AstError::Parse { line: l, kind }) => {
                    assert_eq!(l, line, "{input:?}");
                    assert!(kind.to_string().contains(needle), "{kind} vs {needle}");
                }
                other => panic!("{input:?} gave {other:?}"),
            }
        }
        assert_eq!(parse_ast_file(""), Err(AstError::Empty));
        assert_eq!(parse_ast_file("# version 1\n"), Err(AstError::Empty));
    }

    #[test]
    fn headers_and_escapes_round_trip() {
        let ast = Ast::from_parents(
            "id\twith tab",
            Some("Fam\\ily".into()),
            &[(None, "Root"), (Some(0), "Odd\nName")],
        )
        .unwrap();
        let text = serialize_ast(&ast);
        assert!(text.starts_with("# version 1\n# script_id id\\twith tab\n# family Fam\\\\ily\n"));
        assert!(parse_ast_file(&text).unwrap().same_tree(&ast));
    }

    #[test]
    fn namespace_is_stripped() {
        let ast = parse_ast_file("0\t-1\tSystem.Management.Automation.Language.ScriptBlockAst").unwrap();
        assert_eq!(ast.type_name(0), "ScriptBlockAst");
        assert_eq!(normalize_type_name("A."), "A.");
    }

    #[test]
    fn chain_serializes_parent_column() {
        let ast = tree(&[(None, "A"), (Some(0), "B"), (Some(1), "C")]);
        assert_eq!(serialize_ast(&ast), "0\t-1\tA\n1\t0\tB\n2\t1\tC\n");
    }

    #[test]
    fn features() {
        assert_eq!(
            tree_features(&tree(&[(None, "X")])),
            TreeFeatures { depth: 1, node_count: 1 }
        );
        assert_eq!(
            tree_features(&tree(&[(None, "A"), (Some(0), "B"), (Some(0), "C")])),
            TreeFeatures { depth: 2, node_count: 3 }
        );
        let chain: Vec<_> = (0usize..5).map(|i| (i.checked_sub(1), "N")).collect();
        assert_eq!(
            tree_features(&tree(&chain)),
            TreeFeatures { depth: 5, node_count: 5 }
        );
    }

    #[test]
    fn leaf_counts_small_trees() {
        assert_eq!(leaf_counts(&tree(&[(None, "X")])), vec![1]);
        assert_eq!(
            leaf_counts(&tree(&[(None, "A"), (Some(0), "B"), (Some(0), "C")])),
            vec![2, 1, 1]
        );
        // Balanced binary tree in DFS order: 0 -> (1 -> 2,3), (4 -> 5,6).
        let binary = tree(&[
            (None, "R"),
            (Some(0), "I"),
            (Some(1), "L"),
            (Some(1), "L"),
            (Some(0), "I"),
            (Some(4), "L"),
            (Some(4), "L"),
        ]);
        assert_eq!(leaf_counts(&binary), vec![4, 2, 1, 1, 2, 1, 1]);
    }

    #[test]
    fn subtrees_of_small_trees() {
        assert!(extract_subtrees(&tree(&[(None, "X")])).is_empty());

        let two = extract_subtrees(&tree(&[(None, "A"), (Some(0), "B"), (Some(0), "C")]));
        assert_eq!(two.len(), 1);
        let fractions: Vec<f64> = two[0].children.iter().map(|c| c.leaf_fraction).collect();
        assert_eq!(fractions, vec![0.5, 0.5]);

        // A -> B(leaf), C -> (D, D, D)
        let ast = tree(&[
            (None, "A"),
            (Some(0), "B"),
            (Some(0), "C"),
            (Some(2), "D"),
            (Some(2), "D"),
            (Some(2), "D"),
        ]);
        let subs = extract_subtrees(&ast);
        let id = |n: &str| ast.types().id(n).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].parent_type, id("A"));
        assert_eq!(
            subs[0].children,
            vec![
                SubtreeChild { type_id: id("B"), leaf_fraction: 0.25 },
                SubtreeChild { type_id: id("C"), leaf_fraction: 0.75 },
            ]
        );
        assert_eq!(subs[1].parent_type, id("C"));
        for c in &subs[1].children {
            assert_eq!(c.type_id, id("D"));
            assert_eq!(c.leaf_fraction, 1.0 / 3.0);
        }
    }

    #[test]
    fn shared_table_reinterns() {
        let mut table = NodeTypeTable::from_names(["Z", "A"]).unwrap();
        let ast = tree(&[(None, "A"), (Some(0), "Q")]);
        let subs = extract_subtrees_into(&ast, &mut table);
        assert_eq!(subs[0].signature(), vec![1, 2]);
        assert_eq!(table.names(), &["Z", "A", "Q"]);
    }

    #[test]
    fn table_rejects_duplicates_and_empty() {
        assert!(NodeTypeTable::from_names(["A", "A"]).is_err());
        assert!(NodeTypeTable::from_names([""]).is_err());
        let json = serde_json::to_string(&NodeTypeTable::from_names(["A", "B"]).unwrap()).unwrap();
        assert_eq!(json, r#"["A","B"]"#);
        assert!(serde_json::from_str::<NodeTypeTable>(r#"["A","A"]"#).is_err());
    }

    #[test]
    fn constructor_validates() {
        let types = NodeTypeTable::from_names(["A"]).unwrap();
        let bad = vec![
            AstNode { index: 0, parent: None, type_id: 0 },
            AstNode { index: 1, parent: Some(1), type_id: 0 },
        ];
        assert!(Ast::new("", None, types.clone(), bad).is_err());
        let unknown = vec![AstNode { index: 0, parent: None, type_id: 4 }];
        assert!(Ast::new("", None, types, unknown).is_err());
    }
}
