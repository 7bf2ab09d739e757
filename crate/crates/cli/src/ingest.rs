//! Parallel loading of `.ast.tsv` corpora.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use psast_core::ast::{parse_ast_file, FILE_EXTENSION};
use psast_core::Ast;
use rayon::prelude::*;

/// A corpus file that failed to load.
#[derive(Debug)]
pub struct FileError {
    pub path: PathBuf,
    pub message: String,
}

impl std::fmt::Display for FileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Debug, Default)]
pub struct Corpus {
    /// Parsed trees in path order.
    pub trees: Vec<(PathBuf, Ast)>,
    pub errors: Vec<FileError>,
}

impl Corpus {
    pub fn asts(&self) -> impl Iterator<Item = &Ast> {
        self.trees.iter().map(|(_, a)| a)
    }
}

/// All `.ast.tsv` files below `dir`, sorted by path.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("corpus directory {} does not exist", dir.display());
    }
    let mut files = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if path.to_string_lossy().ends_with(FILE_EXTENSION) {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Parses every corpus file on the rayon pool. Unreadable or malformed files
/// are collected, not fatal.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let results: Vec<(PathBuf, Result<Ast, String>)> = corpus_files(dir)?
        .into_par_iter()
        .map(|path| {
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|text| parse_ast_file(&text).map_err(|e| e.to_string()));
            (path, parsed)
        })
        .collect();
    let mut corpus = Corpus::default();
    for (path, parsed) in results {
        match parsed {
            Ok(ast) => corpus.trees.push((path, ast)),
            Err(message) => corpus.errors.push(FileError { path, message }),
        }
    }
    Ok(corpus)
}
