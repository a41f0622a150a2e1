// Reference values computed offline with 25+ digit arithmetic.

/// (p, r, z, E_{p,r}(z)) sampled uniformly with p in [0.35, 2], r in [0.1, 3], z in [-8, 3].
pub const ML_POINTS: [(f64, f64, f64, f64); 50] = [
    (1.7637, 0.6826, 0.5904, 1.2609528295338877),
    (1.7748, 1.5567, -2.0048, 0.530715683735443),
    (0.5407, 0.7403, -7.3838, 0.033615076775567056),
    (0.7999, 1.7697, 1.359, 3.2649220660936087),
    (0.6564, 1.6651, 2.1491, 16.814190465889855),
    (0.7453, 2.4132, 1.8737, 3.28213875047475),
    (0.533, 1.8071, 2.2065, 46.078907430967874),
    (1.3514, 2.4741, 1.6328, 1.2044611302818111),
    (1.1772, 2.6534, -6.9392, 0.15520351409157168),
    (1.8442, 1.507, 1.0341, 1.5278967972765019),
    (1.268, 2.098, 0.6413, 1.211606133189497),
    (1.3821, 2.7758, -1.7509, 0.4173834216852382),
    (0.4031, 1.6883, -0.1596, 0.9672563513888884),
    (1.8388, 0.3822, -7.363, -0.9018654349044758),
    (1.5189, 1.4331, -5.4882, -0.06495441394620753),
    (1.9791, 1.4733, -2.3625, 0.49113731259014914),
    (1.7833, 1.3489, -5.8264, -0.2463318605321745),
    (1.5855, 2.8475, -1.7068, 0.4333931945031969),
    (1.7129, 0.6728, 2.8338, 4.524399321820593),
    (0.5707, 0.4423, -3.55, -0.011178134998390106),
    (0.6814, 2.694, -3.8832, 0.19401254868051848),
    (1.5108, 0.6917, -6.7266, -0.3021902223503975),
    (1.3219, 1.9037, -5.451, 0.15684685762851813),
    (0.5984, 1.5675, -7.121, 0.12917030662069315),
    (1.9414, 1.1412, -0.4397, 0.87257225230385),
    (1.0267, 1.2585, 2.156, 6.548692635212028),
    (1.3346, 1.3928, 0.9008, 1.8401352523592882),
    (0.7735, 1.2023, 1.2189, 4.179231393243113),
    (0.8784, 0.1629, 1.9955, 19.824915712390716),
    (0.4196, 2.7244, -1.9057, 0.2684712836015819),
    (1.5488, 2.8594, 2.9352, 0.9457748436966442),
    (0.4245, 2.3357, -3.6427, 0.21697261921959557),
    (1.5897, 1.196, 0.9975, 1.80079322726684),
    (1.6576, 0.4098, -3.0906, -0.8883826906162324),
    (0.6055, 0.3982, -5.7712, -0.02381906025422555),
    (0.6267, 2.9275, 1.7272, 2.1412837603211554),
    (1.6999, 2.674, -7.4657, 0.20096013369715585),
    (1.5322, 0.5793, -1.2183, -0.18055633581414024),
    (1.3566, 1.8947, -4.9244, 0.1792443779104956),
    (0.9134, 1.7131, -1.6511, 0.4654456889148067),
    (1.5867, 0.2634, -6.0622, -0.28151260890293217),
    (1.4762, 1.018, 0.5842, 1.5148076585587904),
    (0.4146, 2.9915, -4.4675, 0.1227577408018716),
    (1.6363, 2.9681, -0.4223, 0.4844316871335879),
    (1.7186, 0.7075, -6.6127, -0.7068862474455428),
    (1.5306, 1.9886, -1.537, 0.6332394197941176),
    (0.9385, 1.2457, -6.351, 0.06329432555023119),
    (0.775, 1.0115, -3.0638, 0.12029261058233676),
    (0.7743, 1.6706, 0.9566, 2.440083444902154),
    (0.7171, 2.2079, -2.3541, 0.3434796383917662),
];

/// (p, x, E_p(-x)) for large arguments.
pub const ML_LARGE: [(f64, f64, f64); 33] = [
    (0.1, 1.500000e+01, 0.058783452847323406),
    (0.1, 6.000000e+01, 0.01536123388993001),
    (0.1, 1.000000e+03, 0.0009349205536058907),
    (0.1, 1.000000e+05, 9.357701316197182e-06),
    (0.1, 1.000000e+08, 9.357787123235027e-09),
    (0.25, 5.000000e-01, 0.6376705192003933),
    (0.25, 3.000000e+00, 0.2190044275604068),
    (0.25, 1.500000e+01, 0.051977231408360185),
    (0.25, 6.000000e+01, 0.013445372990850392),
    (0.25, 1.000000e+03, 0.0008154850253301743),
    (0.25, 1.000000e+05, 8.16043297230009e-06),
    (0.25, 1.000000e+08, 8.160489334563671e-09),
    (0.5, 5.000000e-01, 0.6156903441929259),
    (0.5, 3.000000e+00, 0.17900115118138996),
    (0.5, 1.500000e+01, 0.03752960638850576),
    (0.5, 6.000000e+01, 0.009401854275176388),
    (0.5, 1.000000e+03, 0.0005641893014533876),
    (0.5, 1.000000e+05, 5.6418958351954685e-06),
    (0.5, 1.000000e+08, 5.641895835477562e-09),
    (0.75, 5.000000e-01, 0.6037903450952468),
    (0.75, 3.000000e+00, 0.12585513691184153),
    (0.75, 1.500000e+01, 0.019715347028239044),
    (0.75, 6.000000e+01, 0.0046764666421501245),
    (0.75, 1.000000e+03, 0.00027609801263627745),
    (0.75, 1.000000e+05, 2.758184838036286e-06),
    (0.75, 1.000000e+08, 2.7581566565115725e-09),
    (0.9, 5.000000e-01, 0.603405498695861),
    (0.9, 3.000000e+00, 0.08388835403377326),
    (0.9, 1.500000e+01, 0.007928602432344447),
    (0.9, 6.000000e+01, 0.0018022340312846147),
    (0.9, 1.000000e+03, 0.00010528835943209589),
    (0.9, 1.000000e+05, 1.0511544325003102e-06),
    (0.9, 1.000000e+08, 1.0511370235377687e-09),
];

pub const GAMMA_0_3: f64 = 2.991_568_987_687_590_7;
pub const ML_HALF_HALF_M1: f64 = 0.136_606_007_391_949_28;
/// (0.5)^{-0.5} E_{0.5,0.5}(-4 * 0.5^{0.5})
pub const KERNEL_EXAMPLE: f64 = 0.042_599_430_387_113_855;
/// E_{0.5}(-pi^2 0.1^{0.5}) / E_{0.5}(-pi^2)
pub const BACKWARD_EXAMPLE: f64 = 3.035_495_081_033_882_3;
/// Gamma(0.75) E_{0.25,0.75}(Gamma(0.5))
pub const GRONWALL_EXAMPLE: f64 = 167_970.218_842_436_61;
/// E_{0.5}(-k^2 pi^2 0.1^{0.5}) for k = 1, 2, 3
pub const PROPAGATE_HALF: [f64; 3] = [0.172_644_810_913_897_9, 0.045_048_782_682_571_49, 0.020_072_803_351_108_99];
