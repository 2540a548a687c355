"""Constantes numéricas fijas del laboratorio."""

# Tolerancias de validación de campos
MEAN_ZERO_TOL = 1e-12
HERMITIAN_TOL = 1e-10
INCOMPRESSIBILITY_TOL = 1e-10

# Resolución mínima de las mallas
MIN_GRID_POINTS = 4
MIN_OPERATOR_POINTS = 16

# Perfiles de cizalla
PROFILE_SAMPLES = 4096
INFLECTION_XTOL = 1e-10
CRITICAL_LAYER_REL = 1e-6
KERNEL_MAX = 1e8
DEGENERATE_SLOPE_TOL = 1e-10

# Diagnósticos
FIT_TRANSIENT_WINDOW = 5.0
SHEAR_ONLY_TOL = 1e-14

# Umbrales de los promedios RAGE y de velocidad A(T)/A(T_ref) y de la tasa de crecimiento
RAGE_RATIO_MAX = 0.2
VELOCITY_RATIO_MAX = 0.25
GROWTH_RATE_REL_TOL = 0.1

# Nombres de perfiles analíticos incluidos
BUILTIN_PROFILES = {
    "sinY",
    "tanh",
    "couette",
    "parabola",
}

# Columnas de salida de las tablas de estabilidad
STABILITY_CSV_COLUMNS = (
    "l",
    "alpha",
    "n_neg",
    "k_ul",
    "max_Re_lambda",
)
