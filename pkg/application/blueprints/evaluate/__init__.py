from application.blueprints.evaluate.commands import evaluate
