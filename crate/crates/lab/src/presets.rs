//! Named scenarios, one per acceptance experiment.

pub const PRESETS: [(&str, &str); 13] = [
    ("fs-baseline", FS_BASELINE),
    ("nu-half", NU_HALF),
    ("nu-third", NU_THIRD),
    ("nu-one", NU_ONE),
    ("poincare", POINCARE),
    ("fs-current", FS_CURRENT),
    ("nu-third-current", NU_THIRD_CURRENT),
    ("fs-expectation", FS_EXPECTATION),
    ("fs-sequence", FS_SEQUENCE),
    ("product-fs", PRODUCT_FS),
    ("atom-line", ATOM_LINE),
    ("atom-third-line", ATOM_THIRD_LINE),
    ("product-pairs", PRODUCT_PAIRS),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

const FS_BASELINE: &str = "\
[experiment]
name = fs-baseline
kind = bergman
p_list = 2, 4, 8, 16, 32
";

const NU_HALF: &str = "\
[experiment]
name = nu-half
kind = report-all
p_list = 8, 16, 32, 64

[weight]
fs_scale = 0.5
atoms = 0:0.5

[sampling]
samples = 1000
";

const NU_THIRD: &str = "\
[experiment]
name = nu-third
kind = dim
p_list = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32

[weight]
fs_scale = 0.6666666666666667
atoms = 0:0.3333333333333333
";

const NU_ONE: &str = "\
[experiment]
name = nu-one
kind = dim
p_list = 1, 2, 4, 8, 16, 32

[weight]
fs_scale = 0
atoms = 0:1
";

const POINCARE: &str = "\
[experiment]
name = poincare
kind = bergman
p_list = 4, 8, 16, 32

[volume]
kind = poincare
punctures = 0
delta = 0.5
";

const FS_CURRENT: &str = "\
[experiment]
name = fs-current
kind = fscurrent
p_list = 4, 8, 16, 32
";

const NU_THIRD_CURRENT: &str = "\
[experiment]
name = nu-third-current
kind = fscurrent
p_list = 4, 8, 16, 32

[weight]
fs_scale = 0.6666666666666667
atoms = 0:0.3333333333333333
";

const FS_EXPECTATION: &str = "\
[experiment]
name = fs-expectation
kind = expectation
p_list = 10

[sampling]
seeds = 1
samples = 2000
cd_samples = 1000000
";

const FS_SEQUENCE: &str = "\
[experiment]
name = fs-sequence
kind = zeros
p_list = 8, 16, 32, 64

[sampling]
seeds = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10
samples = 1000
";

const PRODUCT_FS: &str = "\
[experiment]
name = product-fs
kind = ma2
model = product
p_list = 4, 8, 16

[weight2]
fs_scale = 1

[grid]
half_width = 4
nodes = 81
";

const ATOM_LINE: &str = "\
[experiment]
name = atom-line
kind = ma2
model = product
p_list = 4, 8, 16

[weight]
fs_scale = 0.5
atoms = 0:0.5

[weight2]
fs_scale = 1

[grid]
half_width = 4
nodes = 81
";

const ATOM_THIRD_LINE: &str = "\
[experiment]
name = atom-third-line
kind = ma2
model = product
p_list = 4, 8, 16

[weight]
fs_scale = 0.6666666666666667
atoms = 0:0.3333333333333333

[weight2]
fs_scale = 1

[grid]
half_width = 4
nodes = 81
";

const PRODUCT_PAIRS: &str = "\
[experiment]
name = product-pairs
kind = expectation
model = product
p_list = 2, 4

[weight2]
fs_scale = 1

[sampling]
seeds = 1
samples = 200
";
