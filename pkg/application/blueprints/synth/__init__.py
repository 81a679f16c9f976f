from application.blueprints.synth.commands import synth
