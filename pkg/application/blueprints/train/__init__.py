from application.blueprints.train.commands import train
