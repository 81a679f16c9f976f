import os


def _env(name, default, cast=str):
    value = os.environ.get(f'BICLSTM_{name}')
    return default if value is None else cast(value)


class Config:
    """Base configuration class"""
    LOG_LEVEL = _env('LOG_LEVEL', 'INFO')
    THREADS = _env('THREADS', 1, int)

    # Model
    PATCH_SIZE = 8
    HIDDEN_CHANNELS = 32
    KERNEL_SIZE = 3
    DROPOUT = 0.6
    BAND_GROUP = 1
    FEATURE_MODE = 'full_sequence'
    DIRECTION = 'bidirectional'

    # Training
    LEARNING_RATE = 1e-3
    BATCH_SIZE = 16
    EPOCHS = _env('EPOCHS', 100, int)
    OPTIMIZER = 'adam'
    MOMENTUM = 0.9
    BETA1 = 0.9
    BETA2 = 0.999
    EPSILON = 1e-8
    CLIP_NORM = 5.0
    AUGMENT = True
    SEED = _env('SEED', 0, int)
    FORGET_BIAS = 0.0

    # Split
    TRAIN_FRACTION = 0.1

    # Experiment command
    REPEATS = 5

    @staticmethod
    def init_app(cli):
        pass


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = _env('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    LOG_LEVEL = _env('LOG_LEVEL', 'WARNING')
    # Small enough for CliRunner tests to finish in seconds
    HIDDEN_CHANNELS = 4
    EPOCHS = 2
    BATCH_SIZE = 8
    REPEATS = 2


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False
    TESTING = False
    LOG_LEVEL = _env('LOG_LEVEL', 'WARNING')

    @classmethod
    def init_app(cls, cli):
        Config.init_app(cli)


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}
