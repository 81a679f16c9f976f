from application.blueprints.gradcheck.commands import gradcheck
