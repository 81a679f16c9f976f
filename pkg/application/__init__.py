import click
from config import config
from application.extensions import init_logging
from application.schemas import vars_of


class BiClstmCli(click.Group):
    """Command group that routes uncaught exceptions to registered error handlers"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.config = {}
        self.debug = False
        self.error_handlers = {}

    def errorhandler(self, exc_class):
        def decorator(fn):
            self.error_handlers[exc_class] = fn
            return fn
        return decorator

    def find_handler(self, error):
        for cls in type(error).__mro__:
            if cls in self.error_handlers:
                return self.error_handlers[cls]
        return None

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except Exception as error:
            handler = self.find_handler(error)
            if handler is None:
                raise
            ctx.exit(handler(error))


def create_app(config_name='default'):
    """
    Application Factory Pattern
    Creates and configures the command-line application

    Args:
        config_name (str): The configuration to use ('development', 'testing', 'production', 'default')

    Returns:
        BiClstmCli: Configured command group
    """

    @click.group(cls=BiClstmCli, context_settings={"help_option_names": ["-h", "--help"]})
    @click.option("--log-level", default=None, help="Override the configured log level.")
    @click.pass_context
    def cli(ctx, log_level):
        """Bi-CLSTM hyperspectral classifier: synthesise, train, evaluate, predict."""
        if log_level:
            init_logging(log_level)
        ctx.obj = cli.config

    # Load configuration
    cli.config = vars_of(config[config_name])
    cli.debug = cli.config.get('DEBUG', False)
    config[config_name].init_app(cli)

    # Initialize extensions
    init_logging(cli.config['LOG_LEVEL'])

    # Register blueprints
    from application.blueprints.synth import synth
    from application.blueprints.train import train
    from application.blueprints.evaluate import evaluate
    from application.blueprints.predict import predict
    from application.blueprints.gradcheck import gradcheck
    from application.blueprints.experiment import experiment

    cli.add_command(synth)
    cli.add_command(train)
    cli.add_command(evaluate)
    cli.add_command(predict)
    cli.add_command(gradcheck)
    cli.add_command(experiment)

    # Register error handlers mapping exceptions to exit codes
    register_error_handlers(cli)

    return cli


def register_error_handlers(cli):
    """
    Register error handlers so every failure ends in a standard error report
    and a scriptable exit code

    - 2: argument, shape and configuration errors
    - 1: I/O, file format, divergence and anything unexpected

    Each error gets a unique id that appears both in the log and on the console.
    """
    from marshmallow import ValidationError
    from rich.markup import escape
    import logging
    import traceback
    import uuid
    from datetime import datetime, timezone

    from application.errors import ArgumentError, CubeFormatError, DivergenceError, ShapeError
    from application.extensions import console

    logger = logging.getLogger(__name__)

    def get_command_context():
        """Capture command context for logging"""
        ctx = click.get_current_context(silent=True)
        context = {'timestamp': datetime.now(timezone.utc).isoformat()}
        if ctx is not None:
            context['command'] = ctx.invoked_subcommand
            context['program'] = ctx.info_name
        return context

    def log_error(error_id, error_type, error, exit_code, additional_info=None):
        """Log error with full context"""
        log_data = {
            'error_id': error_id,
            'error_type': error_type,
            'exit_code': exit_code,
            'error_message': str(error),
            'context': get_command_context()
        }

        if additional_info:
            log_data['additional_info'] = additional_info

        # Stack trace only for unexpected failures
        if error_type == "Internal Error":
            log_data['traceback'] = traceback.format_exc()

        logger.error(f"Error {error_id}: {error_type} - {str(error)}", extra=log_data)

    def create_error_response(error_type, message, error_id, exit_code, details=None):
        """Print a standardised error report and return the exit code"""
        console.print(f"[bold red]{escape(error_type)}[/]: {escape(str(message))}")
        console.print(f"error_id: {error_id}", style="dim")

        # Include details in development mode
        if cli.debug and details:
            for key, value in details.items():
                console.print(f"  {key}: {escape(str(value))}", style="dim")

        return exit_code

    @cli.errorhandler(ValidationError)
    def handle_validation_error(error):
        """Handle Marshmallow validation errors in run configs and requests"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "Validation Error", error, 2, {"validation_errors": error.messages})

        return create_error_response(
            "Validation Error",
            f"Configuration validation failed: {error.messages}",
            error_id,
            2
        )

    @cli.errorhandler(ArgumentError)
    def handle_argument_error(error):
        """Handle violated preconditions"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "Argument Error", error, 2)

        return create_error_response("Argument Error", str(error), error_id, 2)

    @cli.errorhandler(ShapeError)
    def handle_shape_error(error):
        """Handle inconsistent tensor shapes"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "Shape Error", error, 2, {"shapes": error.shapes})

        return create_error_response("Shape Error", str(error), error_id, 2, {"shapes": error.shapes})

    @cli.errorhandler(CubeFormatError)
    def handle_format_error(error):
        """Handle unreadable cube, label and checkpoint files"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "Format Error", error, 1, {"path": error.path, "offset": error.offset})

        return create_error_response("Format Error", str(error), error_id, 1)

    @cli.errorhandler(DivergenceError)
    def handle_divergence(error):
        """Handle non-finite losses or gradients during training"""
        error_id = str(uuid.uuid4())
        details = {"batch_index": error.batch_index, "parameter_norm": error.parameter_norm}
        log_error(error_id, "Training Diverged", error, 1, details)

        return create_error_response("Training Diverged", str(error), error_id, 1, details)

    @cli.errorhandler(OSError)
    def handle_io_error(error):
        """Handle missing or unwritable files"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "I/O Error", error, 1, {"filename": getattr(error, 'filename', None)})

        return create_error_response("I/O Error", str(error), error_id, 1)

    @cli.errorhandler(Exception)
    def handle_unexpected_error(error):
        """Handle any other unhandled exceptions"""
        error_id = str(uuid.uuid4())
        log_error(error_id, "Internal Error", error, 1)

        # In development, provide more details
        details = None
        if cli.debug:
            details = {
                "type": type(error).__name__,
                "traceback": traceback.format_exc()
            }

        return create_error_response(
            "Internal Error",
            "An unexpected error occurred. Report it with error ID: " + error_id,
            error_id,
            1,
            details
        )
