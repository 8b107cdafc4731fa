use sha2::{Digest, Sha256};

pub type Digest32 = [u8; 32];

/// SHA-256 over the concatenation of `parts`, each preceded by its length so
/// that distinct part boundaries never collide.
pub fn hash_parts(domain: &[u8], parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain);
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn sha256(bytes: &[u8]) -> Digest32 {
    Sha256::digest(bytes).into()
}
