//! Built-in figure presets, shipped as annotated TOML.

const PRESETS: &[(&str, &str)] = &[
    ("fig1f", include_str!("../presets/fig1f.toml")),
    ("fig2a", include_str!("../presets/fig2a.toml")),
    ("fig2b", include_str!("../presets/fig2b.toml")),
    ("fig2c", include_str!("../presets/fig2c.toml")),
    ("fig2d", include_str!("../presets/fig2d.toml")),
    ("fig3a", include_str!("../presets/fig3a.toml")),
    ("fig3b", include_str!("../presets/fig3b.toml")),
    ("fig3c", include_str!("../presets/fig3c.toml")),
    ("fig3d", include_str!("../presets/fig3d.toml")),
    ("fig4a", include_str!("../presets/fig4a.toml")),
    ("fig4b", include_str!("../presets/fig4b.toml")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// First comment line of the preset file.
pub fn summary(name: &str) -> Option<&'static str> {
    preset_text(name)?
        .lines()
        .next()
        .map(|l| l.trim_start_matches('#').trim())
}
