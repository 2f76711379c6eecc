#![allow(clippy::approx_constant)]

//! Published (avg F1, avg runtime, avg GFLOPS, score) rows. Rows inside a
//! shared GFLOPS group repeat the group's value.

pub const ROWS: [(&str, f64, f64, f64, f64); 43] = [
    ("baselines, 20", 0.6394, 0.9422, 999.0271, 0.7060),
    ("MiniLM-L3, 20", 0.6348, 1.0916, 999.0271, 0.6973),
    ("MiniLM-L3, 40", 0.6246, 1.0077, 999.0271, 0.6945),
    ("MiniLM-L3, 60", 0.6243, 1.0931, 999.0271, 0.6909),
    ("MiniLM-L6, 20", 0.6425, 1.3468, 2173.2976, 0.6447),
    ("MiniLM-L6, 40", 0.6476, 1.2921, 2173.2976, 0.6499),
    ("MiniLM-L6, 60", 0.6578, 1.2674, 2173.2976, 0.6571),
    ("albert-small, 20", 0.6363, 1.5817, 8088.5031, 0.3950),
    ("albert-small, 40", 0.6342, 1.5483, 8088.5031, 0.3950),
    ("albert-small, 60", 0.6442, 1.8769, 8088.5031, 0.3879),
    ("distilroberta, 20", 0.6499, 1.5599, 8997.9049, 0.3676),
    ("distilroberta, 40", 0.6559, 1.7063, 8997.9049, 0.3654),
    ("distilroberta, 60", 0.6585, 1.5653, 8997.9049, 0.3725),
    ("mpnet, 20", 0.6921, 3.5339, 18489.3073, -0.0657),
    ("mpnet, 40", 0.6795, 2.6626, 18489.3073, -0.0384),
    ("mpnet, 60", 0.6564, 2.3183, 18489.3073, -0.0384),
    ("java baseline default", 0.6979, 0.6750, 803.4690, 0.7596),
    ("java mpnet svm", 0.7404, 3.7043, 15342.3384, 0.0824),
    ("java distilroberta svm", 0.7378, 2.6844, 7527.8992, 0.4342),
    ("java albert svm", 0.7277, 3.2573, 6375.5939, 0.4513),
    ("java MiniLM-L6 rf", 0.7251, 0.9127, 1782.4005, 0.7273),
    ("java MiniLM-L3 lr", 0.7119, 2.1144, 803.4690, 0.7104),
    ("java baseline svm", 0.7022, 2.1690, 803.4690, 0.7024),
    ("python baseline default", 0.6030, 0.2351, 103.6213, 0.7483),
    ("python distilroberta rf", 0.6737, 0.3447, 811.9539, 0.7580),
    ("python MiniLM-L6 rf", 0.6564, 0.3212, 207.1154, 0.7727),
    ("python mpnet xg", 0.6548, 0.3648, 1665.6587, 0.7117),
    ("python MiniLM-L3 lr", 0.6165, 1.5583, 103.6213, 0.7034),
    ("python albert lr", 0.6157, 1.8046, 966.8189, 0.6586),
    ("python baseline lr", 0.6062, 1.5670, 103.6213, 0.6969),
    ("pharo baseline default", 0.6068, 0.1973, 91.9368, 0.7525),
    ("pharo mpnet default", 0.7105, 0.3296, 1481.3102, 0.7539),
    ("pharo distilroberta rf", 0.6658, 0.3014, 658.0518, 0.7611),
    ("pharo albert svm", 0.6579, 1.6541, 746.0903, 0.6988),
    ("pharo MiniLM-L3 svm", 0.6414, 1.5860, 91.9368, 0.7177),
    ("pharo MiniLM-L6 rf", 0.6365, 0.2838, 183.7817, 0.7632),
    ("pharo baseline rf", 0.6356, 0.2394, 91.9368, 0.7681),
    ("cross non-default heads", 0.6740, 1.2567, 2081.4527, 0.6709),
    ("cross default java head", 0.6640, 1.2165, 1102.5212, 0.7056),
    ("cross baselines", 0.6394, 0.9422, 999.0271, 0.7060),
    ("cross naive bayes bow", 0.4736, 0.0360, 0.0, 0.6828),
    ("final submitted", 0.6740, 1.6859, 2084.5110, 0.6536),
    ("official baselines", 0.6394, 1.1702, 999.0271, 0.6968),
];
