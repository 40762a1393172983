//! Benchmark kernels in the loop language.

/// `(name, source)` of every shipped kernel.
pub const KERNELS: &[(&str, &str)] = &[
    ("calc_tpoints", include_str!("../kernels/pop.loop")),
    ("psinv", include_str!("../kernels/psinv.loop")),
    ("resid", include_str!("../kernels/resid.loop")),
    ("gaussian", include_str!("../kernels/gaussian.loop")),
    ("j3d27pt", include_str!("../kernels/j3d27pt.loop")),
    ("poisson", include_str!("../kernels/poisson.loop")),
];

pub fn kernel(name: &str) -> Option<&'static str> {
    KERNELS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
