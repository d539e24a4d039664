//! Feeders shipped with the library, addressed as `bundled:<bundle>/<file>`.

macro_rules! bundle_file {
    ($dir:literal, $file:literal) => {
        ($file, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/", $dir, "/", $file)))
    };
}

#[derive(Clone, Copy, Debug)]
pub struct Bundle {
    pub name: &'static str,
    pub description: &'static str,
    /// Reproduces the source data exactly, as opposed to a reconstruction.
    pub exact: bool,
    pub feeder: &'static str,
    pub anchors: &'static [&'static str],
    pub scenarios: &'static [&'static str],
    /// `(file name, contents)`.
    pub files: &'static [(&'static str, &'static str)],
}

impl Bundle {
    pub fn file(&self, name: &str) -> Option<&'static str> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
    }

    /// `bundled:` path of one of this bundle's files.
    pub fn path(&self, file: &str) -> String {
        format!("{}{}/{}", super::BUNDLED_PREFIX, self.name, file)
    }
}

static BUNDLES: &[Bundle] = &[
    Bundle {
        name: "5bus",
        description: "240 V four-section radial feeder, moderate and high loading",
        exact: true,
        feeder: "5bus.feeder",
        anchors: &["5bus-moderate.anchor", "5bus-high.anchor"],
        scenarios: &["5bus-moderate.scenario", "5bus-high.scenario"],
        files: &[
            bundle_file!("5bus", "MANIFEST.md"),
            bundle_file!("5bus", "5bus.feeder"),
            bundle_file!("5bus", "5bus-moderate.anchor"),
            bundle_file!("5bus", "5bus-moderate.scenario"),
            bundle_file!("5bus", "5bus-high.anchor"),
            bundle_file!("5bus", "5bus-high.scenario"),
        ],
    },
    Bundle {
        name: "ieee37",
        description: "single-phase IEEE 37-bus reconstruction (APPROXIMATE)",
        exact: false,
        feeder: "ieee37.feeder",
        anchors: &["ieee37-base.anchor"],
        scenarios: &[
            "ieee37-increased-load.scenario",
            "ieee37-increased-load-no-voltvar.scenario",
        ],
        files: &[
            bundle_file!("ieee37", "MANIFEST.md"),
            bundle_file!("ieee37", "ieee37.feeder"),
            bundle_file!("ieee37", "ieee37-base.anchor"),
            bundle_file!("ieee37", "ieee37-increased-load.scenario"),
            bundle_file!("ieee37", "ieee37-increased-load-no-voltvar.scenario"),
        ],
    },
    Bundle {
        name: "ieee123",
        description: "single-phase IEEE 123-bus reconstruction (APPROXIMATE)",
        exact: false,
        feeder: "ieee123.feeder",
        anchors: &["ieee123-base.anchor"],
        scenarios: &[
            "ieee123-increased-load.scenario",
            "ieee123-increased-load-no-voltvar.scenario",
        ],
        files: &[
            bundle_file!("ieee123", "MANIFEST.md"),
            bundle_file!("ieee123", "ieee123.feeder"),
            bundle_file!("ieee123", "ieee123-base.anchor"),
            bundle_file!("ieee123", "ieee123-increased-load.scenario"),
            bundle_file!("ieee123", "ieee123-increased-load-no-voltvar.scenario"),
        ],
    },
];

pub fn bundled_feeders() -> &'static [Bundle] {
    BUNDLES
}

pub fn bundle(name: &str) -> Option<&'static Bundle> {
    BUNDLES.iter().find(|b| b.name == name)
}

/// Contents of `<bundle>/<file>`.
pub fn file(path: &str) -> Option<&'static str> {
    let (b, f) = path.split_once('/')?;
    bundle(b)?.file(f)
}
