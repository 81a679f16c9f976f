from application.blueprints.experiment.commands import experiment
