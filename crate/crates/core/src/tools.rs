//! Locating, version-probing and installing the scanner binaries.
//!
//! Nothing here runs implicitly; the pipeline only needs the binaries to be
//! resolvable. `tools install` drives [`install_tool`].

use std::fs::File;
use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use serde::Serialize;

use crate::adapters::resolve_binary;
use crate::model::Tool;

/// Literal token in download templates replaced by the release version.
pub const VERSION_TOKEN: &str = "version";

const GITHUB: &str = "https://github.com";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Amd64,
    Arm64,
}

impl Arch {
    pub fn current() -> Self {
        if std::env::consts::ARCH == "aarch64" {
            Arch::Arm64
        } else {
            Arch::Amd64
        }
    }
}

/// Where a scanner's releases live and how its Linux archive is named.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    pub tool: Tool,
    pub releases_url: String,
    /// Contains [`VERSION_TOKEN`] at least once.
    pub download_template: String,
    pub binary_name: String,
}

impl ToolSpec {
    /// Release locations for the four scanners on Linux.
    pub fn defaults(arch: Arch) -> Vec<ToolSpec> {
        Tool::SCANNERS.iter().map(|&t| ToolSpec::default_for(t, arch)).collect()
    }

    /// `None` for [`Tool::Fixture`], which has nothing to install.
    pub fn lookup(tool: Tool, arch: Arch) -> Option<ToolSpec> {
        (tool != Tool::Fixture).then(|| ToolSpec::default_for(tool, arch))
    }

    fn default_for(tool: Tool, arch: Arch) -> ToolSpec {
        let (repo, asset) = match (tool, arch) {
            (Tool::Trivy, Arch::Amd64) => ("aquasecurity/trivy", "trivy_version_Linux-64bit.tar.gz"),
            (Tool::Trivy, Arch::Arm64) => ("aquasecurity/trivy", "trivy_version_Linux-ARM64.tar.gz"),
            (Tool::Kubesec, Arch::Amd64) => ("controlplaneio/kubesec", "kubesec_linux_amd64.tar.gz"),
            (Tool::Kubesec, Arch::Arm64) => ("controlplaneio/kubesec", "kubesec_linux_arm64.tar.gz"),
            (Tool::KubeLinter, Arch::Amd64) => ("stackrox/kube-linter", "kube-linter-linux.tar.gz"),
            (Tool::KubeLinter, Arch::Arm64) => ("stackrox/kube-linter", "kube-linter-linux_arm64.tar.gz"),
            (Tool::KubeScore, Arch::Amd64) => ("zegl/kube-score", "kube-score_version_linux_amd64.tar.gz"),
            (Tool::KubeScore, Arch::Arm64) => ("zegl/kube-score", "kube-score_version_linux_arm64.tar.gz"),
            (Tool::Fixture, _) => ("", "fixture"),
        };
        ToolSpec {
            tool,
            releases_url: format!("{GITHUB}/{repo}/releases/latest"),
            download_template: format!("{GITHUB}/{repo}/releases/download/vversion/{asset}"),
            binary_name: tool.binary_name().to_string(),
        }
    }

    /// Point both URLs at `host` instead of github.com (for mirrors and tests).
    pub fn rebased(mut self, host: &str) -> ToolSpec {
        let host = host.trim_end_matches('/');
        self.releases_url = self.releases_url.replacen(GITHUB, host, 1);
        self.download_template = self.download_template.replacen(GITHUB, host, 1);
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolsError {
    #[error("network error: {0}")]
    Network(String),
    #[error("release URL {0} did not redirect to a tagged release")]
    MalformedRedirect(String),
    #[error("unsupported archive format: {}", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("{binary} not found in {}", archive.display())]
    MemberNotFound { binary: String, archive: PathBuf },
    #[error("invalid binary name {0:?}")]
    InvalidBinaryName(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ToolsError + '_ {
    move |source| ToolsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Version named by a release URL after redirects: the last path segment
/// with one leading `v` removed.
pub fn version_from_release_url(releases_url: &str, final_url: &str) -> Result<String, ToolsError> {
    let segment = final_url
        .split(['?', '#'])
        .next()
        .unwrap_or_default()
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .unwrap_or_default();
    let version = segment.strip_prefix('v').unwrap_or(segment);
    if version.is_empty() || segment == "latest" || final_url.trim_end_matches('/') == releases_url.trim_end_matches('/') {
        return Err(ToolsError::MalformedRedirect(releases_url.to_string()));
    }
    Ok(version.to_string())
}

/// Follow the `latest` redirect with a HEAD request and read the version off
/// the final URL.
pub async fn probe_latest_version(client: &reqwest::Client, releases_url: &str) -> Result<String, ToolsError> {
    let response = client
        .head(releases_url)
        .send()
        .await
        .map_err(|e| ToolsError::Network(e.to_string()))?;
    if !response.status().is_success() {
        return Err(ToolsError::Network(format!("{releases_url}: HTTP {}", response.status())));
    }
    version_from_release_url(releases_url, response.url().as_str())
}

/// Replace every occurrence of [`VERSION_TOKEN`] in `template`.
pub fn build_download_url(template: &str, version: &str) -> String {
    template.replace(VERSION_TOKEN, version)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolCheck {
    pub tool: Tool,
    pub found: bool,
    pub path: Option<PathBuf>,
    pub version: Option<String>,
}

fn version_args(tool: Tool) -> &'static [&'static str] {
    match tool {
        Tool::Trivy => &["--version"],
        _ => &["version"],
    }
}

async fn binary_version(tool: Tool, path: &Path) -> Option<String> {
    let child = tokio::process::Command::new(path)
        .args(version_args(tool))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .kill_on_drop(true)
        .output();
    let out = tokio::time::timeout(Duration::from_secs(5), child).await.ok()?.ok()?;
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    Some(line.to_string())
}

/// Resolve each tool in `bin_dir`, then on `PATH`. Never fails; missing tools
/// are reported as such.
pub async fn check_tools(specs: &[ToolSpec], bin_dir: Option<&Path>) -> Vec<ToolCheck> {
    let mut report = Vec::with_capacity(specs.len());
    for spec in specs {
        let path = resolve_binary(&spec.binary_name, bin_dir);
        let version = match &path {
            Some(p) => binary_version(spec.tool, p).await,
            None => None,
        };
        report.push(ToolCheck {
            tool: spec.tool,
            found: path.is_some(),
            path,
            version,
        });
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArchiveKind {
    TarGz,
    Zip,
}

fn archive_kind(path: &Path) -> Result<ArchiveKind, ToolsError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(".tar.gz") || name.ends_with(".tgz") {
        return Ok(ArchiveKind::TarGz);
    }
    if name.ends_with(".zip") {
        return Ok(ArchiveKind::Zip);
    }
    let mut magic = [0u8; 4];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(io_err(path))?;
    match &magic[..n] {
        [0x1f, 0x8b, ..] => Ok(ArchiveKind::TarGz),
        [b'P', b'K', 3, 4] => Ok(ArchiveKind::Zip),
        _ => Err(ToolsError::UnsupportedFormat(path.to_path_buf())),
    }
}

fn member_matches(member: &Path, binary_name: &str) -> bool {
    member.file_name().and_then(|n| n.to_str()) == Some(binary_name)
}

/// Copy the member named `binary_name` (at any depth) into `out`.
fn extract_member(archive: &Path, kind: ArchiveKind, binary_name: &str, out: &mut impl Write) -> Result<bool, ToolsError> {
    let file = File::open(archive).map_err(io_err(archive))?;
    match kind {
        ArchiveKind::TarGz => {
            let mut tar = tar::Archive::new(flate2::read::GzDecoder::new(file));
            for entry in tar.entries().map_err(io_err(archive))? {
                let mut entry = entry.map_err(io_err(archive))?;
                let is_file = entry.header().entry_type().is_file();
                let path = entry.path().map_err(io_err(archive))?.into_owned();
                if is_file && member_matches(&path, binary_name) {
                    std::io::copy(&mut entry, out).map_err(io_err(archive))?;
                    return Ok(true);
                }
            }
            Ok(false)
        }
        ArchiveKind::Zip => {
            let mut zip = zip::ZipArchive::new(file).map_err(|e| ToolsError::Io {
                path: archive.to_path_buf(),
                source: std::io::Error::other(e),
            })?;
            for i in 0..zip.len() {
                let mut entry = zip.by_index(i).map_err(|e| ToolsError::Io {
                    path: archive.to_path_buf(),
                    source: std::io::Error::other(e),
                })?;
                if entry.is_file() && member_matches(Path::new(entry.name()), binary_name) {
                    std::io::copy(&mut entry, out).map_err(io_err(archive))?;
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

/// Extract `binary_name` from a `.tar.gz` or `.zip` archive into `bin_dir`
/// (flattening any directories), mark it executable and delete the archive.
pub fn install_archive(archive: &Path, binary_name: &str, bin_dir: &Path) -> Result<PathBuf, ToolsError> {
    let plain = Path::new(binary_name).file_name().and_then(|n| n.to_str()) == Some(binary_name);
    if !plain || binary_name == "." || binary_name == ".." {
        return Err(ToolsError::InvalidBinaryName(binary_name.to_string()));
    }
    let kind = archive_kind(archive)?;
    std::fs::create_dir_all(bin_dir).map_err(io_err(bin_dir))?;

    let mut tmp = tempfile::Builder::new()
        .prefix(".install-")
        .tempfile_in(bin_dir)
        .map_err(io_err(bin_dir))?;
    if !extract_member(archive, kind, binary_name, tmp.as_file_mut())? {
        return Err(ToolsError::MemberNotFound {
            binary: binary_name.to_string(),
            archive: archive.to_path_buf(),
        });
    }
    tmp.as_file_mut().flush().map_err(io_err(bin_dir))?;
    tmp.as_file_mut().rewind().map_err(io_err(bin_dir))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o755))
            .map_err(io_err(bin_dir))?;
    }
    let target = bin_dir.join(binary_name);
    tmp.persist(&target).map_err(|e| ToolsError::Io {
        path: target.clone(),
        source: e.error,
    })?;
    std::fs::remove_file(archive).map_err(io_err(archive))?;
    Ok(target)
}

/// Probe, download and install one tool. Returns the installed version and
/// path.
pub async fn install_tool(
    client: &reqwest::Client,
    spec: &ToolSpec,
    bin_dir: &Path,
) -> Result<(String, PathBuf), ToolsError> {
    let version = probe_latest_version(client, &spec.releases_url).await?;
    let url = build_download_url(&spec.download_template, &version);
    tracing::info!(tool = %spec.tool, %version, %url, "downloading");
    let response = client
        .get(&url)
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| ToolsError::Network(e.to_string()))?;
    let bytes = response.bytes().await.map_err(|e| ToolsError::Network(e.to_string()))?;

    let ext = if url.ends_with(".zip") { "zip" } else { "tar.gz" };
    std::fs::create_dir_all(bin_dir).map_err(io_err(bin_dir))?;
    let archive = bin_dir.join(format!("{}-{version}.{ext}", spec.tool));
    std::fs::write(&archive, &bytes).map_err(io_err(&archive))?;
    let installed = install_archive(&archive, &spec.binary_name, bin_dir);
    if installed.is_err() {
        let _ = std::fs::remove_file(&archive);
    }
    Ok((version, installed?))
}
