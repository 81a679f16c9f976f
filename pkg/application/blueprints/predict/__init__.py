from application.blueprints.predict.commands import predict
