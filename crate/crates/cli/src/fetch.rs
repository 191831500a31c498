use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ridgeless::mnist;

pub const DEFAULT_BASE_URL: &str = "https://storage.googleapis.com/cvdf-datasets/mnist/";

/// Compressed sizes of the canonical archives.
const ARCHIVES: [(&str, u64); 4] = [
    (mnist::TRAIN_IMAGES, 9_912_422),
    (mnist::TRAIN_LABELS, 28_881),
    (mnist::TEST_IMAGES, 1_648_877),
    (mnist::TEST_LABELS, 4_542),
];

/// Download the four `.gz` archives into `dir`, skipping files that are
/// already present. Lengths are checked and each file is parsed once.
pub fn fetch(dir: &Path, base_url: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, len) in ARCHIVES {
        if let Some(p) = mnist::locate(dir, name) {
            log::info!("{} already present", p.display());
            continue;
        }
        let url = format!("{}/{name}.gz", base_url.trim_end_matches('/'));
        log::info!("downloading {url}");
        let resp = ureq::get(&url).call().with_context(|| format!("GET {url}"))?;
        let mut bytes = Vec::new();
        resp.into_body()
            .into_reader()
            .take(len + 1)
            .read_to_end(&mut bytes)
            .with_context(|| format!("reading {url}"))?;
        if bytes.len() as u64 != len {
            bail!("{url}: expected {len} bytes, got {}", bytes.len());
        }
        mnist::parse_idx(&bytes).with_context(|| format!("{url}: not a valid IDX archive"))?;
        let path = dir.join(format!("{name}.gz"));
        std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Offline mode: copy IDX files (raw or gzip) from a local directory.
pub fn copy_from(src: &Path, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, _) in ARCHIVES {
        let from = mnist::locate(src, name).with_context(|| format!("{name}(.gz) not found in {}", src.display()))?;
        let bytes = std::fs::read(&from)?;
        mnist::parse_idx(&bytes).with_context(|| format!("{}: not a valid IDX file", from.display()))?;
        let to = dir.join(from.file_name().expect("file path"));
        if to != from {
            std::fs::write(&to, &bytes).with_context(|| format!("writing {}", to.display()))?;
        }
    }
    Ok(())
}
