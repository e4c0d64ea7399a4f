//! Cross-checks the Merkle tree against a from-scratch recursive oracle.
//!
//! The oracle hashes with `sha2` directly and rebuilds roots and proof paths
//! by plain recursion over leaf slices, sharing no code with the crate.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use sha2::{Digest as _, Sha256};
use swt_core::merkle::{verify_consistency, verify_inclusion, ConsistencyProof, InclusionProof, TreeState};
use swt_core::Digest;

fn sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn oracle_leaf(data: &[u8]) -> [u8; 32] {
    sha(&[&[0u8], data])
}

fn k_for(n: usize) -> usize {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

fn oracle_root(leaves: &[[u8; 32]]) -> [u8; 32] {
    match leaves.len() {
        0 => sha(&[]),
        1 => leaves[0],
        n => {
            let k = k_for(n);
            sha(&[&[1u8], &oracle_root(&leaves[..k]), &oracle_root(&leaves[k..])])
        }
    }
}

fn oracle_path(m: usize, leaves: &[[u8; 32]]) -> Vec<[u8; 32]> {
    let n = leaves.len();
    if n <= 1 {
        return vec![];
    }
    let k = k_for(n);
    if m < k {
        let mut p = oracle_path(m, &leaves[..k]);
        p.push(oracle_root(&leaves[k..]));
        p
    } else {
        let mut p = oracle_path(m - k, &leaves[k..]);
        p.push(oracle_root(&leaves[..k]));
        p
    }
}

fn oracle_subproof(m: usize, leaves: &[[u8; 32]], complete: bool) -> Vec<[u8; 32]> {
    let n = leaves.len();
    if m == n {
        return if complete { vec![] } else { vec![oracle_root(leaves)] };
    }
    let k = k_for(n);
    if m <= k {
        let mut p = oracle_subproof(m, &leaves[..k], complete);
        p.push(oracle_root(&leaves[k..]));
        p
    } else {
        let mut p = oracle_subproof(m - k, &leaves[k..], false);
        p.push(oracle_root(&leaves[..k]));
        p
    }
}

fn d(bytes: [u8; 32]) -> Digest {
    Digest::from_bytes(bytes)
}

fn random_leaves(seed: u64, n: usize) -> Vec<[u8; 32]> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..48);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            oracle_leaf(&data)
        })
        .collect()
}

fn flipped(path: &[Digest], element: usize, bit: usize) -> Vec<Digest> {
    let mut out = path.to_vec();
    let mut bytes = *out[element].as_bytes();
    bytes[bit / 8] ^= 1 << (bit % 8);
    out[element] = Digest::from_bytes(bytes);
    out
}

#[test]
fn known_vectors() {
    assert_eq!(hex::encode(oracle_leaf(b"")), "6e340b9cffb37a989ca544e6bb780a2c78901d3fb33738768511a30617afa01d");
    assert_eq!(swt_core::merkle::leaf_hash(b""), d(oracle_leaf(b"")));
    assert_eq!(TreeState::new().root(), d(sha(&[])));
}

#[test]
fn inclusion_matches_oracle_up_to_64() {
    let leaves = random_leaves(1, 64);
    let tree = TreeState::from_leaf_hashes(leaves.iter().copied().map(d));
    for size in 1..=64usize {
        let root = oracle_root(&leaves[..size]);
        assert_eq!(tree.root_at(size as u64).unwrap(), d(root));
        for index in 0..size {
            let proof = tree.prove_inclusion(index as u64, size as u64).unwrap();
            let expected: Vec<Digest> = oracle_path(index, &leaves[..size]).into_iter().map(d).collect();
            assert_eq!(proof.path, expected, "path for {index} in {size}");
            assert!(verify_inclusion(&d(leaves[index]), &proof, &d(root)));
            for other in [index + 1, index.wrapping_sub(1)] {
                if other < size && leaves[other] != leaves[index] {
                    assert!(!verify_inclusion(&d(leaves[other]), &proof, &d(root)));
                }
            }
            for e in 0..proof.path.len() {
                for bit in 0..256 {
                    let bad = InclusionProof { path: flipped(&proof.path, e, bit), ..proof.clone() };
                    assert!(!verify_inclusion(&d(leaves[index]), &bad, &d(root)), "flip {e}/{bit} at {index}/{size}");
                }
            }
        }
    }
}

#[test]
fn consistency_matches_oracle_up_to_64() {
    let leaves = random_leaves(2, 64);
    let tree = TreeState::from_leaf_hashes(leaves.iter().copied().map(d));
    for new in 0..=64usize {
        let new_root = d(oracle_root(&leaves[..new]));
        for old in 0..=new {
            let old_root = d(oracle_root(&leaves[..old]));
            let proof = tree.prove_consistency(old as u64, new as u64).unwrap();
            let expected: Vec<Digest> = if old == 0 || old == new {
                vec![]
            } else {
                oracle_subproof(old, &leaves[..new], true).into_iter().map(d).collect()
            };
            assert_eq!(proof.path, expected, "consistency {old}->{new}");
            assert!(verify_consistency(&old_root, &new_root, &proof));
            for e in 0..proof.path.len() {
                for bit in 0..256 {
                    let bad = ConsistencyProof { path: flipped(&proof.path, e, bit), ..proof.clone() };
                    assert!(!verify_consistency(&old_root, &new_root, &bad), "flip {e}/{bit} at {old}->{new}");
                }
            }
        }
    }
}

fn collect_nodes(leaves: &[[u8; 32]], out: &mut Vec<Digest>) {
    out.push(d(oracle_root(leaves)));
    if leaves.len() > 1 {
        let k = k_for(leaves.len());
        collect_nodes(&leaves[..k], out);
        collect_nodes(&leaves[k..], out);
    }
}

/// Every node of every prefix tree of both trees: all hashes an honest proof
/// over either history could contain.
fn node_pool(a: &[[u8; 32]], b: &[[u8; 32]]) -> Vec<Digest> {
    let mut pool = Vec::new();
    for leaves in [a, b] {
        for end in 1..=leaves.len() {
            collect_nodes(&leaves[..end], &mut pool);
        }
    }
    pool.sort();
    pool.dedup();
    pool
}

fn for_each_path(pool: &[Digest], len: usize, f: &mut dyn FnMut(&[Digest])) {
    let mut idx = vec![0usize; len];
    loop {
        let path: Vec<Digest> = idx.iter().map(|&i| pool[i]).collect();
        f(&path);
        let mut pos = 0;
        loop {
            if pos == len {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < pool.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Path length the verifier accepts for `old -> new`; it depends only on the sizes.
fn accepted_len(old: usize, new: usize) -> usize {
    let t = TreeState::from_leaf_hashes((0..new as u64).map(|i| Digest::of(&i.to_be_bytes())));
    t.prove_consistency(old as u64, new as u64).unwrap().path.len()
}

#[test]
fn forked_trees_have_no_consistency_proof() {
    let base = random_leaves(3, 8);
    let mut checked = 0u64;
    for new in 2..=8usize {
        for old in 1..=new {
            let len = accepted_len(old, new);
            for fork_at in 0..old {
                let old_tree = &base[..old];
                let mut forked = base[..new].to_vec();
                forked[fork_at] = oracle_leaf(format!("fork-{fork_at}").as_bytes());
                let pool = node_pool(old_tree, &forked);
                let old_root = d(oracle_root(old_tree));
                let new_root = d(oracle_root(&forked));
                for_each_path(&pool, len, &mut |path| {
                    let proof = ConsistencyProof { old_size: old as u64, new_size: new as u64, path: path.to_vec() };
                    assert!(!verify_consistency(&old_root, &new_root, &proof), "fork at {fork_at}, {old}->{new}");
                    checked += 1;
                });
                // Any other length is rejected on structure alone.
                let honest_shape = vec![pool[0]; len + 1];
                for other in [&honest_shape[..], &honest_shape[..len.saturating_sub(1)]] {
                    if other.len() != len {
                        let proof = ConsistencyProof { old_size: old as u64, new_size: new as u64, path: other.to_vec() };
                        assert!(!verify_consistency(&old_root, &new_root, &proof));
                    }
                }
            }
        }
    }
    assert!(checked > 100_000, "enumerated only {checked} candidates");
}

#[test]
fn four_leaf_fork_exhaustive() {
    let a = random_leaves(4, 4);
    let mut b = a.clone();
    b[1] = oracle_leaf(b"evil");
    let pool = node_pool(&a, &b);
    // The fork sits at index 1, so only old trees of two or more leaves diverge.
    for old in 2..=4usize {
        let old_root = d(oracle_root(&a[..old]));
        for new in old.max(2)..=4usize {
            let new_root = d(oracle_root(&b[..new]));
            for len in 0..=3 {
                for_each_path(&pool, len, &mut |path| {
                    let proof = ConsistencyProof { old_size: old as u64, new_size: new as u64, path: path.to_vec() };
                    assert!(!verify_consistency(&old_root, &new_root, &proof));
                });
            }
        }
    }
}

proptest! {
    #[test]
    fn appends_stay_consistent(sizes in proptest::collection::vec(0usize..40, 1..6), seed in any::<u64>()) {
        let total: usize = sizes.iter().sum();
        let leaves = random_leaves(seed, total);
        let mut tree = TreeState::new();
        let mut pins = vec![(0u64, tree.root())];
        let mut at = 0;
        for step in sizes {
            for leaf in &leaves[at..at + step] {
                tree.push(d(*leaf));
            }
            at += step;
            let root = tree.root();
            prop_assert_eq!(root, d(oracle_root(&leaves[..at])));
            for &(old, old_root) in &pins {
                let proof = tree.prove_consistency(old, tree.size()).unwrap();
                prop_assert!(proof.path.len() <= swt_core::merkle::max_inclusion_path_len(tree.size()) + 1);
                prop_assert!(verify_consistency(&old_root, &root, &proof));
            }
            pins.push((tree.size(), root));
        }
    }

    #[test]
    fn inclusion_path_bound(size in 1u64..5000, pick in any::<u64>()) {
        let tree = TreeState::from_leaf_hashes((0..size).map(|i| Digest::of(&i.to_be_bytes())));
        let index = pick % size;
        let proof = tree.prove_inclusion(index, size).unwrap();
        prop_assert!(proof.path.len() <= swt_core::merkle::max_inclusion_path_len(size));
        prop_assert!(verify_inclusion(&tree.leaf_hashes()[index as usize], &proof, &tree.root()));
    }

    #[test]
    fn roots_are_pure(seed in any::<u64>(), n in 0usize..70) {
        let leaves = random_leaves(seed, n);
        let a = TreeState::from_leaf_hashes(leaves.iter().copied().map(d));
        let mut b = TreeState::new();
        for l in &leaves {
            b.push(d(*l));
        }
        prop_assert_eq!(a.root(), b.root());
        prop_assert_eq!(a, b);
    }
}
