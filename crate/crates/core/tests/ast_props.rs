use proptest::prelude::*;
use psast_core::ast::*;

/// Random tree in DFS preorder: each new node hangs off a node on the path
/// from the root to the previous node.
fn random_tree() -> impl Strategy<Value = Vec<(Option<usize>, String)>> {
    (1usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<prop::sample::Index>(), n),
            prop::collection::vec("[A-Za-z][A-Za-z0-9 .\\\\\t]{0,12}", n),
        )
            .prop_map(move |(picks, names)| {
                let mut entries = Vec::with_capacity(n);
                let mut path: Vec<usize> = Vec::new();
                for (i, (pick, name)) in picks.into_iter().zip(names).enumerate() {
                    let parent = if i == 0 {
                        None
                    } else {
                        let keep = pick.index(path.len()) + 1;
                        path.truncate(keep);
                        Some(path[keep - 1])
                    };
                    path.push(i);
                    entries.push((parent, name));
                }
                entries
            })
    })
}

fn build(entries: &[(Option<usize>, String)]) -> Ast {
    Ast::from_parents("s-1", Some("Fam".into()), entries).unwrap()
}

/// Leaves under `node`, found by walking children recursively.
fn leaves_below(children: &[Vec<usize>], node: usize) -> u64 {
    if children[node].is_empty() {
        1
    } else {
        children[node].iter().map(|&c| leaves_below(children, c)).sum()
    }
}

fn height(children: &[Vec<usize>], node: usize) -> usize {
    1 + children[node].iter().map(|&c| height(children, c)).max().unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialize_then_parse_is_identity(entries in random_tree()) {
        let ast = build(&entries);
        let text = serialize_ast(&ast);
        let back = parse_ast_file(&text).unwrap();
        prop_assert!(back.same_tree(&ast));
        prop_assert_eq!(&back.script_id, &ast.script_id);
        prop_assert_eq!(&back.family, &ast.family);
        prop_assert_eq!(serialize_ast(&back), text);
    }

    #[test]
    fn leaf_fractions_sum_to_one(entries in random_tree()) {
        let ast = build(&entries);
        let children = ast.children();
        let subtrees = extract_subtrees(&ast);
        let internal = children.iter().filter(|c| !c.is_empty()).count();
        prop_assert_eq!(subtrees.len(), internal);
        for st in &subtrees {
            let sum: f64 = st.children.iter().map(|c| c.leaf_fraction).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {}", sum);
            prop_assert!(st.children.iter().all(|c| c.leaf_fraction > 0.0 && c.leaf_fraction <= 1.0));
        }
        let counts = leaf_counts(&ast);
        for (i, &count) in counts.iter().enumerate() {
            prop_assert_eq!(count, leaves_below(&children, i));
        }
    }

    #[test]
    fn features_match_recursive_walk(entries in random_tree()) {
        let ast = build(&entries);
        let f = tree_features(&ast);
        prop_assert_eq!(f.node_count, entries.len());
        prop_assert_eq!(f.depth, height(&ast.children(), 0));
    }
}
