//! Append-only binary Merkle tree with inclusion and consistency proofs.
//!
//! Hashing follows the Certificate Transparency construction: leaves are
//! hashed as `SHA-256(0x00 || data)`, interior nodes as
//! `SHA-256(0x01 || left || right)`, and a tree of `n > 1` leaves splits at
//! the largest power of two strictly less than `n`.
//!
//! [`TreeState`] keeps the hash of every complete, aligned power-of-two
//! subtree next to the leaves, so the root of any prefix (and therefore any
//! proof against any prefix) costs `O(log n)` hash operations.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::Digest;

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for tree size {tree_size}")]
    IndexOutOfRange { index: u64, tree_size: u64 },
    #[error("tree size {requested} exceeds current size {current}")]
    SizeOutOfRange { requested: u64, current: u64 },
    #[error("old size {old_size} exceeds new size {new_size}")]
    SizesReversed { old_size: u64, new_size: u64 },
}

/// `SHA-256(0x00 || data)`.
pub fn leaf_hash(data: &[u8]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update([LEAF_PREFIX]);
    hasher.update(data);
    Digest::from_bytes(hasher.finalize().into())
}

/// `SHA-256(0x01 || left || right)`.
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update([NODE_PREFIX]);
    hasher.update(left.as_bytes());
    hasher.update(right.as_bytes());
    Digest::from_bytes(hasher.finalize().into())
}

/// Root of the empty tree: the hash of the empty string.
pub fn empty_root() -> Digest {
    Digest::of(b"")
}

/// Largest power of two strictly less than `n` (`n >= 2`).
fn split_point(n: u64) -> u64 {
    debug_assert!(n >= 2);
    1 << (63 - (n - 1).leading_zeros())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub tree_size: u64,
    pub path: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyProof {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<Digest>,
}

/// The leaves of an append-only tree plus cached complete subtrees.
#[derive(Debug, Clone, Default)]
pub struct TreeState {
    // levels[0] holds the leaf hashes; levels[k][i] is the hash of the
    // complete subtree over leaves [i << k, (i + 1) << k).
    levels: Vec<Vec<Digest>>,
}

impl PartialEq for TreeState {
    fn eq(&self, other: &Self) -> bool {
        self.leaf_hashes() == other.leaf_hashes()
    }
}

impl Eq for TreeState {}

impl TreeState {
    pub fn new() -> Self {
        TreeState { levels: vec![Vec::new()] }
    }

    pub fn from_leaf_hashes<I: IntoIterator<Item = Digest>>(leaves: I) -> Self {
        let mut state = TreeState::new();
        for leaf in leaves {
            state.push(leaf);
        }
        state
    }

    pub fn size(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.len() as u64)
    }

    pub fn leaf_hashes(&self) -> &[Digest] {
        self.levels.first().map_or(&[], |l| l.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    /// Appends a leaf hash, returning its index.
    pub fn push(&mut self, leaf: Digest) -> u64 {
        if self.levels.is_empty() {
            self.levels.push(Vec::new());
        }
        self.levels[0].push(leaf);
        let index = self.levels[0].len() as u64 - 1;
        let mut level = 0;
        while self.levels[level].len() % 2 == 0 {
            let n = self.levels[level].len();
            let parent = node_hash(&self.levels[level][n - 2], &self.levels[level][n - 1]);
            if self.levels.len() == level + 1 {
                self.levels.push(Vec::new());
            }
            self.levels[level + 1].push(parent);
            level += 1;
        }
        index
    }

    /// Appends raw leaf data, hashing it with [`leaf_hash`].
    pub fn append(&mut self, data: &[u8]) -> u64 {
        self.push(leaf_hash(data))
    }

    /// Root over the whole tree.
    pub fn root(&self) -> Digest {
        self.root_at(self.size()).expect("current size is always in range")
    }

    /// Root of the prefix holding the first `tree_size` leaves.
    pub fn root_at(&self, tree_size: u64) -> Result<Digest, MerkleError> {
        self.check_size(tree_size)?;
        if tree_size == 0 {
            return Ok(empty_root());
        }
        Ok(self.subtree(0, tree_size))
    }

    /// Hash of leaves `[start, end)` where the range is one produced by the
    /// recursive split, i.e. `start` is aligned to `split_point(end - start)`
    /// or the range is itself an aligned power of two.
    fn subtree(&self, start: u64, end: u64) -> Digest {
        let n = end - start;
        debug_assert!(n >= 1);
        if n.is_power_of_two() && start % n == 0 {
            let level = n.trailing_zeros() as usize;
            return self.levels[level][(start >> level) as usize];
        }
        let k = split_point(n);
        node_hash(&self.subtree(start, start + k), &self.subtree(start + k, end))
    }

    fn check_size(&self, tree_size: u64) -> Result<(), MerkleError> {
        if tree_size > self.size() {
            return Err(MerkleError::SizeOutOfRange {
                requested: tree_size,
                current: self.size(),
            });
        }
        Ok(())
    }

    pub fn prove_inclusion(&self, leaf_index: u64, tree_size: u64) -> Result<InclusionProof, MerkleError> {
        self.check_size(tree_size)?;
        if leaf_index >= tree_size {
            return Err(MerkleError::IndexOutOfRange { index: leaf_index, tree_size });
        }
        let mut path = Vec::new();
        self.inclusion_path(leaf_index, 0, tree_size, &mut path);
        Ok(InclusionProof { leaf_index, tree_size, path })
    }

    fn inclusion_path(&self, m: u64, start: u64, end: u64, out: &mut Vec<Digest>) {
        let n = end - start;
        if n == 1 {
            return;
        }
        let k = split_point(n);
        if m < k {
            self.inclusion_path(m, start, start + k, out);
            out.push(self.subtree(start + k, end));
        } else {
            self.inclusion_path(m - k, start + k, end, out);
            out.push(self.subtree(start, start + k));
        }
    }

    pub fn prove_consistency(&self, old_size: u64, new_size: u64) -> Result<ConsistencyProof, MerkleError> {
        self.check_size(new_size)?;
        if old_size > new_size {
            return Err(MerkleError::SizesReversed { old_size, new_size });
        }
        let mut path = Vec::new();
        if old_size != 0 && old_size != new_size {
            self.consistency_path(old_size, 0, new_size, true, &mut path);
        }
        Ok(ConsistencyProof { old_size, new_size, path })
    }

    fn consistency_path(&self, m: u64, start: u64, end: u64, complete: bool, out: &mut Vec<Digest>) {
        let n = end - start;
        if m == n {
            if !complete {
                out.push(self.subtree(start, end));
            }
            return;
        }
        let k = split_point(n);
        if m <= k {
            self.consistency_path(m, start, start + k, complete, out);
            out.push(self.subtree(start + k, end));
        } else {
            self.consistency_path(m - k, start + k, end, false, out);
            out.push(self.subtree(start, start + k));
        }
    }
}

/// Checks that folding `leaf` with the proof path yields `expected_root`.
pub fn verify_inclusion(leaf: &Digest, proof: &InclusionProof, expected_root: &Digest) -> bool {
    if proof.leaf_index >= proof.tree_size {
        return false;
    }
    let mut index = proof.leaf_index;
    let mut last = proof.tree_size - 1;
    let mut hash = *leaf;
    for sibling in &proof.path {
        if last == 0 {
            return false;
        }
        if index & 1 == 1 || index == last {
            hash = node_hash(sibling, &hash);
            if index & 1 == 0 {
                while index & 1 == 0 && index != 0 {
                    index >>= 1;
                    last >>= 1;
                }
            }
        } else {
            hash = node_hash(&hash, sibling);
        }
        index >>= 1;
        last >>= 1;
    }
    last == 0 && hash == *expected_root
}

/// Checks that the tree with root `new_root` extends the tree with root
/// `old_root`, using the sizes carried by `proof`.
pub fn verify_consistency(old_root: &Digest, new_root: &Digest, proof: &ConsistencyProof) -> bool {
    let (old_size, new_size) = (proof.old_size, proof.new_size);
    if old_size > new_size {
        return false;
    }
    if old_size == new_size {
        return proof.path.is_empty() && old_root == new_root;
    }
    if old_size == 0 {
        return proof.path.is_empty() && *old_root == empty_root();
    }
    if proof.path.is_empty() {
        return false;
    }

    let mut path = proof.path.iter();
    // When the old tree is a complete subtree its root is the starting point
    // and is not repeated in the proof.
    let seed = if old_size.is_power_of_two() {
        *old_root
    } else {
        *path.next().expect("path checked non-empty")
    };

    let mut index = old_size - 1;
    let mut last = new_size - 1;
    while index & 1 == 1 {
        index >>= 1;
        last >>= 1;
    }

    let mut old_hash = seed;
    let mut new_hash = seed;
    for sibling in path {
        if last == 0 {
            return false;
        }
        if index & 1 == 1 || index == last {
            old_hash = node_hash(sibling, &old_hash);
            new_hash = node_hash(sibling, &new_hash);
            if index & 1 == 0 {
                while index & 1 == 0 && index != 0 {
                    index >>= 1;
                    last >>= 1;
                }
            }
        } else {
            new_hash = node_hash(&new_hash, sibling);
        }
        index >>= 1;
        last >>= 1;
    }
    last == 0 && old_hash == *old_root && new_hash == *new_root
}

/// Upper bound on inclusion path length: `ceil(log2(tree_size))`.
pub fn max_inclusion_path_len(tree_size: u64) -> usize {
    if tree_size <= 1 {
        0
    } else {
        (64 - (tree_size - 1).leading_zeros()) as usize
    }
}

impl ConsistencyProof {
    /// Compact binary encoding: big-endian `old_size`, `new_size`, a one-byte
    /// hash count, then the raw 32-byte hashes.
    pub fn to_compact(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 32 * self.path.len());
        out.extend_from_slice(&self.old_size.to_be_bytes());
        out.extend_from_slice(&self.new_size.to_be_bytes());
        out.push(self.path.len() as u8);
        for hash in &self.path {
            out.extend_from_slice(hash.as_bytes());
        }
        out
    }

    /// Decodes one proof from the front of `bytes`, returning the rest.
    pub fn from_compact(bytes: &[u8]) -> Option<(Self, &[u8])> {
        if bytes.len() < 17 {
            return None;
        }
        let old_size = u64::from_be_bytes(bytes[0..8].try_into().ok()?);
        let new_size = u64::from_be_bytes(bytes[8..16].try_into().ok()?);
        let count = bytes[16] as usize;
        let body = &bytes[17..];
        if body.len() < count * 32 {
            return None;
        }
        let path = body[..count * 32]
            .chunks_exact(32)
            .map(|c| Digest::from_slice(c).expect("chunk is 32 bytes"))
            .collect();
        Some((ConsistencyProof { old_size, new_size, path }, &body[count * 32..]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hx(s: &str) -> Digest {
        Digest::from_hex(s).unwrap()
    }

    // Frozen with Python hashlib, independent of this module.
    #[test]
    fn leaf_hash_of_empty_input() {
        assert_eq!(
            leaf_hash(b""),
            hx("6e340b9cffb37a989ca544e6bb780a2c78901d3fb33738768511a30617afa01d")
        );
    }

    #[test]
    fn leaf_and_node_hash_are_domain_separated() {
        let a = leaf_hash(b"a");
        let b = leaf_hash(b"b");
        assert_eq!(leaf_hash(b"A"), leaf_hash(b"A"));
        let mut concat = Vec::new();
        concat.extend_from_slice(a.as_bytes());
        concat.extend_from_slice(b.as_bytes());
        assert_ne!(leaf_hash(&concat), node_hash(&a, &b));
    }

    #[test]
    fn two_leaf_vectors() {
        let a = leaf_hash(b"a");
        let b = leaf_hash(b"b");
        assert_eq!(a, hx("022a6979e6dab7aa5ae4c3e5e45f7e977112a7e63593820dbec1ec738a24f93c"));
        assert_eq!(
            node_hash(&a, &b),
            hx("b137985ff484fb600db93107c77b0365c80d78f5b429ded0fd97361d077999eb")
        );
        assert_eq!(
            node_hash(&b, &a),
            hx("8af01af409f78be71c0de3efd008ef3f00d5415f36c3d7ab59abcc491dc1cf39")
        );
    }

    #[test]
    fn roots_of_small_trees() {
        assert_eq!(
            TreeState::new().root(),
            hx("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        );
        let mut t = TreeState::new();
        t.append(b"a");
        assert_eq!(t.root(), leaf_hash(b"a"));
        t.append(b"b");
        t.append(b"c");
        assert_eq!(
            t.root(),
            hx("36642e73c2540ab121e3a6bf9545b0a24982cd830eb13d3cd19de3ce6c021ec1")
        );
        let l: Vec<_> = t.leaf_hashes().to_vec();
        assert_eq!(t.root(), node_hash(&node_hash(&l[0], &l[1]), &l[2]));
    }

    #[test]
    fn inclusion_small_cases() {
        let t = TreeState::from_leaf_hashes([leaf_hash(b"a"), leaf_hash(b"b")]);
        let one = t.prove_inclusion(0, 1).unwrap();
        assert!(one.path.is_empty());
        assert!(verify_inclusion(&leaf_hash(b"a"), &one, &leaf_hash(b"a")));
        let two = t.prove_inclusion(0, 2).unwrap();
        assert_eq!(two.path, vec![leaf_hash(b"b")]);
    }

    #[test]
    fn flipped_byte_fails() {
        let t = TreeState::from_leaf_hashes((0..7u8).map(|i| leaf_hash(&[i])));
        let mut proof = t.prove_inclusion(3, 7).unwrap();
        assert!(verify_inclusion(&leaf_hash(&[3]), &proof, &t.root()));
        let mut bytes = *proof.path[1].as_bytes();
        bytes[5] ^= 0x10;
        proof.path[1] = Digest::from_bytes(bytes);
        assert!(!verify_inclusion(&leaf_hash(&[3]), &proof, &t.root()));
    }

    #[test]
    fn range_errors() {
        let t = TreeState::from_leaf_hashes((0..4u8).map(|i| leaf_hash(&[i])));
        assert_eq!(
            t.prove_inclusion(4, 4),
            Err(MerkleError::IndexOutOfRange { index: 4, tree_size: 4 })
        );
        assert_eq!(
            t.prove_inclusion(0, 5),
            Err(MerkleError::SizeOutOfRange { requested: 5, current: 4 })
        );
        assert_eq!(
            t.prove_consistency(3, 2),
            Err(MerkleError::SizesReversed { old_size: 3, new_size: 2 })
        );
    }

    #[test]
    fn consistency_trivial_cases() {
        let t = TreeState::from_leaf_hashes((0..5u8).map(|i| leaf_hash(&[i])));
        let same = t.prove_consistency(5, 5).unwrap();
        assert!(same.path.is_empty());
        assert!(verify_consistency(&t.root(), &t.root(), &same));
        assert!(!verify_consistency(&t.root(), &t.root_at(4).unwrap(), &same));
        let from_empty = t.prove_consistency(0, 5).unwrap();
        assert!(from_empty.path.is_empty());
        assert!(verify_consistency(&empty_root(), &t.root(), &from_empty));
    }

    #[test]
    fn compact_round_trip() {
        let t = TreeState::from_leaf_hashes((0..100u8).map(|i| leaf_hash(&[i])));
        let p = t.prove_consistency(37, 100).unwrap();
        let mut bytes = p.to_compact();
        bytes.extend_from_slice(b"rest");
        let (back, rest) = ConsistencyProof::from_compact(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(rest, b"rest");
    }

    #[test]
    fn path_bound_helper() {
        assert_eq!(max_inclusion_path_len(1), 0);
        assert_eq!(max_inclusion_path_len(2), 1);
        assert_eq!(max_inclusion_path_len(3), 2);
        assert_eq!(max_inclusion_path_len(4), 2);
        assert_eq!(max_inclusion_path_len(5), 3);
    }
}
