use std::path::{Path, PathBuf};

/// Fixed artifact locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data().join("manifest.json")
    }

    pub fn classifier_dir(&self) -> PathBuf {
        self.root.join("classifier")
    }

    pub fn classifier_ckpt(&self) -> PathBuf {
        self.classifier_dir().join("classifier.ckpt")
    }

    pub fn rl_dir(&self) -> PathBuf {
        self.root.join("rl")
    }

    pub fn policy_ckpt(&self) -> PathBuf {
        self.rl_dir().join("policy.ckpt")
    }

    pub fn rl_checkpoints(&self) -> PathBuf {
        self.rl_dir().join("checkpoints")
    }

    pub fn segment_dir(&self, name: &str) -> PathBuf {
        self.root.join("segment").join(name)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn rel(&self, path: &Path) -> String {
        crate::meta::relative(&self.root, path)
    }
}
