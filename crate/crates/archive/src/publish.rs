use std::fs;
use std::path::{Path, PathBuf};

use swt_core::bundle::{index_file_name, MirrorProofs, ReleaseBundle, BUILDINFO_FILE, BUNDLE_FILE, KEYLIST_FILE, MIRROR_FILE, RELEASE_FILE};
use swt_core::model::IndexKind;

use crate::ArchiveError;

/// Writes `<root>/<release_id>/`. Files land in a temporary directory
/// first so readers never see a half-written release.
pub fn write_publication(
    root: &Path,
    release_bytes: &[u8],
    indices: &[(IndexKind, String, Vec<u8>)],
    buildinfo: &[u8],
    keylist: &[u8],
    bundle: &ReleaseBundle,
    mirror: &MirrorProofs,
) -> Result<PathBuf, ArchiveError> {
    let dir = root.join(format!("{:06}", bundle.release_id));
    let tmp = root.join(format!(".{:06}.tmp", bundle.release_id));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    fs::write(tmp.join(RELEASE_FILE), release_bytes)?;
    for (kind, arch, bytes) in indices {
        fs::write(tmp.join(index_file_name(*kind, arch)), bytes)?;
    }
    fs::write(tmp.join(BUILDINFO_FILE), buildinfo)?;
    fs::write(tmp.join(KEYLIST_FILE), keylist)?;
    let json = serde_json::to_vec_pretty(bundle).map_err(|e| ArchiveError::State(e.to_string()))?;
    fs::write(tmp.join(BUNDLE_FILE), json)?;
    fs::write(tmp.join(MIRROR_FILE), mirror.to_bytes())?;
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::rename(&tmp, &dir)?;
    Ok(dir)
}
